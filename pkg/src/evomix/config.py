"""Run configuration: dataclasses plus JSON load/save.

The JSON schema mirrors the dataclasses 1:1 (see README for the full
field list).  `lambda` is accepted as the JSON key for the expansion
threshold.  Relative IDX paths are resolved against the EVOMIX_DATA_DIR
environment variable when it is set.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError


@dataclass
class StreamConfig:
    source: str = "synthetic_gaussian"
    batch_size: int = 10
    # synthetic_gaussian source
    k_modes: int = 2
    dim: int = 8
    mode_distance: float = 16.0
    cov_scale: float = 1.0
    per_mode: int | list[int] = 450
    per_mode_test: int = 200
    # idx_dataset source
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    classes_per_task: int = 2
    image_side: int = 28
    downsample: int = 1

    def __post_init__(self):
        if self.source not in ("synthetic_gaussian", "idx_dataset"):
            raise ConfigError(f"unknown stream source {self.source!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.source == "idx_dataset":
            missing = [
                k
                for k in ("train_images", "train_labels", "test_images", "test_labels")
                if getattr(self, k) is None
            ]
            if missing:
                raise ConfigError(f"idx_dataset stream needs paths: {', '.join(missing)}")

    def idx_path(self, key: str) -> str:
        """Path field resolved against EVOMIX_DATA_DIR for relative paths."""
        path = getattr(self, key)
        base = os.environ.get("EVOMIX_DATA_DIR")
        if base and not os.path.isabs(path):
            return os.path.join(base, path)
        return path


@dataclass
class ModelConfig:
    lam: float = 1e-4
    direction: str = "below"
    memory_capacity: int = 300
    drop_policy: str = "sliding_window"
    drop_count: int = 10
    latent_dim: int = 4
    enc_hidden: list[int] = field(default_factory=lambda: [32])
    dec_hidden: list[int] = field(default_factory=lambda: [32])
    clf_hidden: list[int] = field(default_factory=lambda: [32])
    lr: float = 3e-4
    clf_lr: float | None = 1e-3
    epochs_per_step: int = 1
    minibatch: int = 32
    n_draws: int = 8
    hsic_m: int = 256
    kernel: str = "rbf"
    bandwidth: float | None = None
    bandwidth_scope: str = "pooled"
    bandwidth_quantile: float = 0.5

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.memory_capacity < max(2, self.drop_count):
            raise ConfigError("memory_capacity must be >= drop_count and >= 2")
        if self.hsic_m < 2:
            raise ConfigError("hsic_m must be >= 2")


@dataclass
class RunConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("need at least one seed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["lambda"] = d["model"].pop("lam")
        return d


def _build_section(cls, raw: dict, section: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {section} keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {section} section: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    stream_raw = dict(raw.pop("stream", {}))
    model_raw = dict(raw.pop("model", {}))
    if "lambda" in model_raw:
        model_raw["lam"] = model_raw.pop("lambda")
    seeds = raw.pop("seeds", [0, 1, 2, 3, 4])
    out = raw.pop("out", None)
    if raw:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(raw))}")
    return RunConfig(
        stream=_build_section(StreamConfig, stream_raw, "stream"),
        model=_build_section(ModelConfig, model_raw, "model"),
        seeds=list(seeds),
        out=out,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2)
        f.write("\n")
