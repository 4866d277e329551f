"""Experiment driver: multi-seed runs, threshold sweeps, reports and
checkpoints.

Each seed builds its own stream, trains the mixture to stream
exhaustion, then evaluates accuracy on the held-out test set over all
classes.  Events (one JSON object per line) are appended to
`<out>.events.jsonl` while the final summary document lands in
`<out>.summary.json`; everything outside the summary's "timing" subtree
is byte-reproducible for a fixed config.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ModelConfig, RunConfig, StreamConfig
from .errors import ConfigError, InputError
from .expert import Expert, ExpertArchitecture
from .hsic import HsicConfig, KernelSpec
from .memory import MemoryBuffer, Sample
from .mixture import MixtureModel, TrainConfig
from .nn import AdamState, MlpParams
from .stream import (
    Dataset,
    Stream,
    build_split_stream,
    default_mode_means,
    downsample_images,
    load_idx,
    synthetic_gaussian_dataset,
    synthetic_gaussian_stream,
)

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 70_000
TEST_DATA_SEED_OFFSET = 90_000


@dataclass
class SeedResult:
    seed: int
    accuracy: float
    expert_count: int
    expansion_steps: list[int]
    checks: list[dict]
    buffer_trace: list[int]
    wall_clock_s: float

    def payload(self) -> dict:
        """Deterministic part of the per-seed record (no wall clock)."""
        return {
            "seed": self.seed,
            "accuracy": self.accuracy,
            "expert_count": self.expert_count,
            "expansion_steps": self.expansion_steps,
            "check_count": len(self.checks),
            "buffer_trace": self.buffer_trace,
        }


@dataclass
class RunMetrics:
    config: dict
    seeds: list[SeedResult]
    hsic_log: list[dict] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.seeds]

    @property
    def accuracy_mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def accuracy_std(self) -> float:
        return float(np.std(self.accuracies))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": [r.payload() for r in self.seeds],
            "aggregate": {
                "accuracy_mean": self.accuracy_mean,
                "accuracy_std": self.accuracy_std,
                "expert_counts": [r.expert_count for r in self.seeds],
            },
            "hsic_log": self.hsic_log,
            "timing": {
                "per_seed_s": [r.wall_clock_s for r in self.seeds],
                "total_s": sum(r.wall_clock_s for r in self.seeds),
            },
        }


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "seeds", "aggregate", "hsic_log", "timing"],
    "properties": {
        "config": {"type": "object"},
        "seeds": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "seed",
                    "accuracy",
                    "expert_count",
                    "expansion_steps",
                    "check_count",
                    "buffer_trace",
                ],
                "properties": {
                    "seed": {"type": "integer"},
                    "accuracy": {"type": "number", "minimum": 0.0, "maximum": 1.0},
                    "expert_count": {"type": "integer", "minimum": 1},
                    "expansion_steps": {"type": "array", "items": {"type": "integer"}},
                    "check_count": {"type": "integer", "minimum": 0},
                    "buffer_trace": {"type": "array", "items": {"type": "integer"}},
                },
            },
        },
        "aggregate": {
            "type": "object",
            "required": ["accuracy_mean", "accuracy_std", "expert_counts"],
        },
        "hsic_log": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["seed", "step", "per_expert", "min", "expanded"],
            },
        },
        "timing": {"type": "object"},
    },
}


def make_architecture(stream_cfg: StreamConfig, model_cfg: ModelConfig) -> ExpertArchitecture:
    if stream_cfg.source == "synthetic_gaussian":
        input_dim = stream_cfg.dim
        class_count = stream_cfg.k_modes
    else:
        side = stream_cfg.image_side // stream_cfg.downsample
        input_dim = side * side
        class_count = 10
    return ExpertArchitecture(
        input_dim=input_dim,
        latent_dim=model_cfg.latent_dim,
        class_count=class_count,
        enc_hidden=tuple(model_cfg.enc_hidden),
        dec_hidden=tuple(model_cfg.dec_hidden),
        clf_hidden=tuple(model_cfg.clf_hidden),
    )


def build_stream_and_test(config: RunConfig, seed: int) -> tuple[Stream, Dataset]:
    s = config.stream
    if s.source == "synthetic_gaussian":
        means = default_mode_means(s.k_modes, s.dim, s.mode_distance)
        stream = synthetic_gaussian_stream(
            s.k_modes, s.dim, means, s.cov_scale, s.per_mode, s.batch_size, seed
        )
        test = synthetic_gaussian_dataset(
            s.k_modes, s.dim, means, s.cov_scale, s.per_mode_test,
            TEST_DATA_SEED_OFFSET + seed,
        )
        return stream, test
    train = load_idx(s.idx_path("train_images"), s.idx_path("train_labels"))
    test = load_idx(s.idx_path("test_images"), s.idx_path("test_labels"))
    if s.downsample > 1:
        train = Dataset(
            downsample_images(train.features, s.image_side, s.downsample),
            train.labels,
            train.class_count,
        )
        test = Dataset(
            downsample_images(test.features, s.image_side, s.downsample),
            test.labels,
            test.class_count,
        )
    stream = build_split_stream(train, s.classes_per_task, s.batch_size, seed)
    return stream, test


def build_model(config: RunConfig, rng: np.random.Generator) -> tuple[MixtureModel, MemoryBuffer]:
    m = config.model
    arch = make_architecture(config.stream, m)
    model = MixtureModel(
        arch,
        m.lam,
        rng,
        direction=m.direction,
        hsic_cfg=HsicConfig(
            m=m.hsic_m,
            kernel=KernelSpec(m.kernel, m.bandwidth),
            bandwidth_scope=m.bandwidth_scope,
            bandwidth_quantile=m.bandwidth_quantile,
        ),
        train_cfg=TrainConfig(
            epochs_per_step=m.epochs_per_step,
            minibatch=m.minibatch,
            lr=m.lr,
            clf_lr=m.clf_lr,
            n_draws=m.n_draws,
        ),
    )
    buffer = MemoryBuffer(m.memory_capacity, m.drop_policy, m.drop_count)
    return model, buffer


def evaluate_accuracy(model: MixtureModel, test: Dataset, rng: np.random.Generator) -> float:
    """Fraction of correct predictions over the whole test set."""
    if len(test) == 0:
        raise InputError("empty test set")
    preds = model.predict_batch(test.features, rng)
    return float((preds == test.labels).mean())


def run_seed(config: RunConfig, seed: int, event_sink=None, return_state: bool = False):
    t0 = time.perf_counter()
    stream, test = build_stream_and_test(config, seed)
    rng = np.random.default_rng(seed)
    model, buffer = build_model(config, rng)
    checks: list[dict] = []
    expansions: list[int] = []
    trace: list[int] = []
    while (batch := stream.next_batch()) is not None:
        report = model.train_step(batch, buffer, rng)
        trace.append(len(buffer))
        if report is not None:
            entry = {"seed": seed, **report.to_dict()}
            checks.append(entry)
            if event_sink is not None:
                event_sink({"event": "hsic_check", **entry})
            if report.expanded:
                expansions.append(report.step)
                if event_sink is not None:
                    event_sink(
                        {
                            "event": "expansion",
                            "seed": seed,
                            "step": report.step,
                            "expert_count": model.expert_count,
                        }
                    )
    accuracy = evaluate_accuracy(model, test, np.random.default_rng(EVAL_SEED_OFFSET + seed))
    wall = time.perf_counter() - t0
    result = SeedResult(
        seed=seed,
        accuracy=accuracy,
        expert_count=model.expert_count,
        expansion_steps=expansions,
        checks=checks,
        buffer_trace=trace,
        wall_clock_s=wall,
    )
    if event_sink is not None:
        event_sink({"event": "seed_done", **result.payload(), "wall_clock_s": wall})
    log.info(
        "seed %d: accuracy %.4f, %d expert(s), %d expansion(s), %.1fs",
        seed, accuracy, model.expert_count, len(expansions), wall,
    )
    if return_state:
        return result, (model, buffer, rng)
    return result


def run_experiment(
    config: RunConfig, events_path: str | None = None, n_jobs: int = 1
) -> RunMetrics:
    """Run every configured seed and aggregate accuracy mean/std.

    Seeds are independent; n_jobs > 1 runs them in parallel worker
    processes with results (and the event stream) assembled in seed
    order, so the output is identical to a sequential run.
    """
    sink = None
    events_file = None
    if events_path is not None:
        events_file = open(events_path, "w")

        def sink(obj):
            events_file.write(json.dumps(obj, sort_keys=True) + "\n")
            events_file.flush()

        sink({"event": "run_start", "config": config.to_dict()})
    try:
        if n_jobs > 1 and len(config.seeds) > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=min(n_jobs, len(config.seeds))) as pool:
                futures = [pool.submit(run_seed, config, seed) for seed in config.seeds]
                results = [f.result() for f in futures]
            if sink is not None:
                for r in results:
                    for entry in r.checks:
                        sink({"event": "hsic_check", **entry})
                    sink({"event": "seed_done", **r.payload(), "wall_clock_s": r.wall_clock_s})
        else:
            results = [run_seed(config, seed, sink) for seed in config.seeds]
    finally:
        if events_file is not None:
            events_file.close()
    hsic_log = [entry for r in results for entry in r.checks]
    return RunMetrics(config=config.to_dict(), seeds=results, hsic_log=hsic_log)


def lambda_sweep(config: RunConfig, grid: list[float]) -> list[dict]:
    """run_experiment per threshold over a shared seed list.

    The grid must be non-empty and ascending; returns one row per
    threshold with per-seed expert counts and aggregate accuracy.
    """
    if not grid:
        raise ConfigError("empty lambda grid")
    if sorted(grid) != list(grid):
        raise ConfigError("lambda grid must be ascending")
    rows = []
    for lam in grid:
        cfg = RunConfig(
            stream=config.stream,
            model=ModelConfig(**{**_model_dict(config.model), "lam": lam}),
            seeds=config.seeds,
            out=config.out,
        )
        metrics = run_experiment(cfg)
        rows.append(
            {
                "lambda": lam,
                "expert_counts": [r.expert_count for r in metrics.seeds],
                "accuracy_mean": metrics.accuracy_mean,
                "accuracy_std": metrics.accuracy_std,
            }
        )
        log.info(
            "lambda %.3g: experts %s, accuracy %.4f +/- %.4f",
            lam, rows[-1]["expert_counts"], metrics.accuracy_mean, metrics.accuracy_std,
        )
    return rows


def _model_dict(m: ModelConfig) -> dict:
    return asdict(m)


def emit_report(metrics: RunMetrics, path: str) -> None:
    """Write the summary document (sorted keys, trailing newline)."""
    with open(path, "w") as f:
        json.dump(metrics.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _params_to_arrays(prefix: str, params: MlpParams, arrays: dict) -> dict:
    meta = {"activations": params.activations, "n_layers": len(params.layers)}
    for i, (w, b) in enumerate(params.layers):
        arrays[f"{prefix}.w{i}"] = w
        arrays[f"{prefix}.b{i}"] = b
    return meta


def _params_from_arrays(prefix: str, meta: dict, arrays) -> MlpParams:
    layers = [
        (arrays[f"{prefix}.w{i}"].copy(), arrays[f"{prefix}.b{i}"].copy())
        for i in range(meta["n_layers"])
    ]
    return MlpParams(layers=layers, activations=list(meta["activations"]))


def _adam_to_arrays(prefix: str, state: AdamState, arrays: dict) -> dict:
    for i, ((mw, mb), (vw, vb)) in enumerate(zip(state.m, state.v)):
        arrays[f"{prefix}.m{i}.w"] = mw
        arrays[f"{prefix}.m{i}.b"] = mb
        arrays[f"{prefix}.v{i}.w"] = vw
        arrays[f"{prefix}.v{i}.b"] = vb
    return {
        "step": state.step,
        "lr": state.lr,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "n_layers": len(state.m),
    }


def _adam_from_arrays(prefix: str, meta: dict, arrays) -> AdamState:
    m = [
        (arrays[f"{prefix}.m{i}.w"].copy(), arrays[f"{prefix}.m{i}.b"].copy())
        for i in range(meta["n_layers"])
    ]
    v = [
        (arrays[f"{prefix}.v{i}.w"].copy(), arrays[f"{prefix}.v{i}.b"].copy())
        for i in range(meta["n_layers"])
    ]
    return AdamState(
        m=m, v=v, step=meta["step"], lr=meta["lr"],
        beta1=meta["beta1"], beta2=meta["beta2"], eps=meta["eps"],
    )


def checkpoint(
    model: MixtureModel,
    buffer: MemoryBuffer,
    path: str,
    rng: np.random.Generator | None = None,
) -> None:
    """Serialize the full mixture state to a single .npz (no pickle).

    Arrays round-trip bit-exactly; restore() rebuilds a model whose
    predictions are identical.
    """
    arrays: dict = {}
    meta = {
        "lambda": model.lam,
        "direction": model.direction,
        "active": model.active,
        "step": model.step,
        "arch": {
            "input_dim": model.arch.input_dim,
            "latent_dim": model.arch.latent_dim,
            "class_count": model.arch.class_count,
            "enc_hidden": list(model.arch.enc_hidden),
            "dec_hidden": list(model.arch.dec_hidden),
            "clf_hidden": list(model.arch.clf_hidden),
        },
        "train_cfg": {
            "epochs_per_step": model.train_cfg.epochs_per_step,
            "minibatch": model.train_cfg.minibatch,
            "lr": model.train_cfg.lr,
            "clf_lr": model.train_cfg.clf_lr,
            "n_draws": model.train_cfg.n_draws,
        },
        "hsic_cfg": {
            "m": model.hsic_cfg.m,
            "kernel": model.hsic_cfg.kernel.kind,
            "bandwidth": model.hsic_cfg.kernel.bandwidth,
            "bandwidth_scope": model.hsic_cfg.bandwidth_scope,
            "bandwidth_quantile": model.hsic_cfg.bandwidth_quantile,
        },
        "experts": [],
        "buffer": {
            "capacity": buffer.capacity,
            "policy": buffer.policy,
            "drop_count": buffer.drop_count,
            "labels": [-1 if s.label is None else int(s.label) for s in buffer.items],
            "arrival_steps": [int(s.arrival_step) for s in buffer.items],
        },
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    for k, exp in enumerate(model.experts):
        emeta = {
            "id": exp.id,
            "frozen": exp.frozen,
            "latent_dim": exp.latent_dim,
            "encoder": _params_to_arrays(f"e{k}.enc", exp.encoder, arrays),
            "decoder": _params_to_arrays(f"e{k}.dec", exp.decoder, arrays),
            "classifier": _params_to_arrays(f"e{k}.clf", exp.classifier, arrays),
        }
        meta["experts"].append(emeta)
    meta["optimizers"] = {
        "enc": _adam_to_arrays("opt.enc", model.enc_opt, arrays),
        "dec": _adam_to_arrays("opt.dec", model.dec_opt, arrays),
        "clf": _adam_to_arrays("opt.clf", model.clf_opt, arrays),
    }
    if buffer.items:
        arrays["buffer.features"] = buffer.features_matrix()
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def restore(path: str) -> tuple[MixtureModel, MemoryBuffer, np.random.Generator | None]:
    """Rebuild (model, buffer, rng) from a checkpoint file."""
    with np.load(path) as arrays:
        meta = json.loads(arrays["meta"].tobytes().decode())
        experts = []
        for k, emeta in enumerate(meta["experts"]):
            experts.append(
                Expert(
                    encoder=_params_from_arrays(f"e{k}.enc", emeta["encoder"], arrays),
                    decoder=_params_from_arrays(f"e{k}.dec", emeta["decoder"], arrays),
                    classifier=_params_from_arrays(f"e{k}.clf", emeta["classifier"], arrays),
                    latent_dim=emeta["latent_dim"],
                    frozen=emeta["frozen"],
                    id=emeta["id"],
                )
            )
        arch = ExpertArchitecture(
            input_dim=meta["arch"]["input_dim"],
            latent_dim=meta["arch"]["latent_dim"],
            class_count=meta["arch"]["class_count"],
            enc_hidden=tuple(meta["arch"]["enc_hidden"]),
            dec_hidden=tuple(meta["arch"]["dec_hidden"]),
            clf_hidden=tuple(meta["arch"]["clf_hidden"]),
        )
        train_cfg = TrainConfig(**meta["train_cfg"])
        hsic_meta = meta["hsic_cfg"]
        hsic_cfg = HsicConfig(
            m=hsic_meta["m"],
            kernel=KernelSpec(hsic_meta["kernel"], hsic_meta["bandwidth"]),
            bandwidth_scope=hsic_meta["bandwidth_scope"],
            bandwidth_quantile=hsic_meta["bandwidth_quantile"],
        )
        optimizers = (
            _adam_from_arrays("opt.enc", meta["optimizers"]["enc"], arrays),
            _adam_from_arrays("opt.dec", meta["optimizers"]["dec"], arrays),
            _adam_from_arrays("opt.clf", meta["optimizers"]["clf"], arrays),
        )
        model = MixtureModel.from_parts(
            arch=arch,
            lam=meta["lambda"],
            direction=meta["direction"],
            hsic_cfg=hsic_cfg,
            train_cfg=train_cfg,
            experts=experts,
            active=meta["active"],
            step=meta["step"],
            optimizers=optimizers,
        )
        bmeta = meta["buffer"]
        buffer = MemoryBuffer(bmeta["capacity"], bmeta["policy"], bmeta["drop_count"])
        if bmeta["labels"]:
            features = arrays["buffer.features"]
            buffer.items = [
                Sample(
                    features=features[i].copy(),
                    label=None if lbl < 0 else lbl,
                    arrival_step=step,
                )
                for i, (lbl, step) in enumerate(zip(bmeta["labels"], bmeta["arrival_steps"]))
            ]
    rng = None
    if meta["rng_state"] is not None:
        rng = np.random.default_rng(0)
        rng.bit_generator.state = meta["rng_state"]
    return model, buffer, rng
