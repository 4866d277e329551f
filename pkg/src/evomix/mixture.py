"""The expanding-mixture controller.

Owns the expert list (all frozen except the last), drives the per-batch
training step (buffer update -> train active expert -> expansion check
when the memory is full -> dropout), and serves predictions by routing
each input to the expert with the best likelihood score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .expert import (
    Expert,
    ExpertArchitecture,
    classifier_loss,
    elbo_loss,
    loglik_score_batch,
    new_expert,
)
from .hsic import HsicConfig, expert_memory_hsic
from .memory import MemoryBuffer
from .nn import AdamState, adam_step, init_adam, mlp_forward


@dataclass
class TrainConfig:
    """Inner-loop optimization settings for the active expert.

    clf_lr lets the classifier keep a faster rate when the VAE rate is
    lowered to make replay lag the memory; None means "same as lr".
    """

    epochs_per_step: int = 1
    minibatch: int = 32
    lr: float = 1e-3
    clf_lr: float | None = None
    n_draws: int = 8

    def __post_init__(self):
        if self.epochs_per_step < 0 or self.minibatch < 1 or self.n_draws < 1:
            raise ConfigError("invalid training configuration")
        if self.clf_lr is None:
            self.clf_lr = self.lr


@dataclass
class HsicReport:
    """Outcome of one expansion check: per-expert statistic and decision."""

    step: int
    per_expert: list[tuple[int, float]]
    min_value: float
    expanded: bool

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "per_expert": [[i, v] for i, v in self.per_expert],
            "min": self.min_value,
            "expanded": self.expanded,
        }


class MixtureModel:
    """Expert list plus the expansion threshold and training settings.

    direction "below" (default) expands when the minimum per-expert
    statistic falls below lambda; "above" applies the literal
    greater-than reading of the expansion rule.
    """

    def __init__(
        self,
        arch: ExpertArchitecture,
        lam: float,
        rng: np.random.Generator,
        direction: str = "below",
        hsic_cfg: HsicConfig | None = None,
        train_cfg: TrainConfig | None = None,
    ):
        if direction not in ("below", "above"):
            raise ConfigError(f"unknown expansion direction {direction!r}")
        if lam < 0:
            raise ConfigError("lambda must be >= 0")
        self.arch = arch
        self.lam = lam
        self.direction = direction
        self.hsic_cfg = hsic_cfg or HsicConfig()
        self.train_cfg = train_cfg or TrainConfig()
        self.experts: list[Expert] = [new_expert(arch, rng, expert_id=0)]
        self.active = 0
        self.step = 0
        self._init_optimizers()

    def _init_optimizers(self) -> None:
        exp = self.active_expert
        lr = self.train_cfg.lr
        self.enc_opt: AdamState = init_adam(exp.encoder, lr)
        self.dec_opt: AdamState = init_adam(exp.decoder, lr)
        self.clf_opt: AdamState = init_adam(exp.classifier, self.train_cfg.clf_lr)

    @classmethod
    def from_parts(
        cls,
        arch: ExpertArchitecture,
        lam: float,
        direction: str,
        hsic_cfg: HsicConfig,
        train_cfg: TrainConfig,
        experts: list[Expert],
        active: int,
        step: int,
        optimizers: tuple[AdamState, AdamState, AdamState],
    ) -> "MixtureModel":
        """Reassemble a model from checkpointed state without re-initializing."""
        model = cls.__new__(cls)
        model.arch = arch
        model.lam = lam
        model.direction = direction
        model.hsic_cfg = hsic_cfg
        model.train_cfg = train_cfg
        model.experts = experts
        model.active = active
        model.step = step
        model.enc_opt, model.dec_opt, model.clf_opt = optimizers
        return model

    @property
    def active_expert(self) -> Expert:
        return self.experts[self.active]

    @property
    def expert_count(self) -> int:
        return len(self.experts)

    def train_step(
        self, batch: list, buffer: MemoryBuffer, rng: np.random.Generator
    ) -> HsicReport | None:
        """One outer training step on an incoming batch.

        Updates the buffer, trains the active expert over it, then (only
        when the buffer is full) runs the expansion check and, if the
        buffer is still full afterwards, the dropout step.
        """
        buffer.update(batch)
        self._train_active(buffer, rng)
        report = None
        if buffer.is_full():
            report = self.expansion_check(buffer, rng)
        if buffer.is_full():
            buffer.drop(min(buffer.drop_count, len(buffer)), rng)
        self.step += 1
        return report

    def _train_active(self, buffer: MemoryBuffer, rng: np.random.Generator) -> None:
        exp = self.active_expert
        assert not exp.frozen
        n = len(buffer)
        if n == 0:
            return
        features = buffer.features_matrix()
        labels = np.array([s.label for s in buffer.items], dtype=np.int64)
        mb = self.train_cfg.minibatch
        for _ in range(self.train_cfg.epochs_per_step):
            perm = rng.permutation(n)
            for start in range(0, n, mb):
                idx = perm[start : start + mb]
                x = features[idx]
                noise = rng.standard_normal((idx.size, exp.latent_dim))
                _, enc_g, dec_g = elbo_loss(exp, x, noise)
                adam_step(exp.encoder, enc_g, self.enc_opt)
                adam_step(exp.decoder, dec_g, self.dec_opt)
                _, clf_g = classifier_loss(exp, x, labels[idx])
                adam_step(exp.classifier, clf_g, self.clf_opt)

    def expansion_check(self, buffer: MemoryBuffer, rng: np.random.Generator) -> HsicReport:
        """Evaluate the per-expert statistic against the full memory and
        expand when the threshold criterion fires."""
        if not buffer.is_full():
            raise InputError("expansion check requires a full buffer")
        features = buffer.features_matrix()
        m = min(self.hsic_cfg.m, len(buffer))
        per_expert = [
            (exp.id, expert_memory_hsic(exp, features, m, rng, self.hsic_cfg))
            for exp in self.experts
        ]
        min_value = min(v for _, v in per_expert)
        if self.direction == "below":
            expanded = min_value < self.lam
        else:
            expanded = min_value > self.lam
        report = HsicReport(
            step=self.step, per_expert=per_expert, min_value=min_value, expanded=expanded
        )
        if expanded:
            self.expand(buffer, rng)
        return report

    def expand(self, buffer: MemoryBuffer, rng: np.random.Generator) -> None:
        """Freeze the active expert, spawn a fresh one, clear the memory."""
        self.active_expert.frozen = True
        fresh = new_expert(self.arch, rng, expert_id=len(self.experts))
        self.experts.append(fresh)
        self.active = len(self.experts) - 1
        self._init_optimizers()
        buffer.clear()

    def select_expert(self, x: np.ndarray, rng: np.random.Generator) -> int:
        """Index of the expert with the highest likelihood score for x
        (ties broken toward the lowest index)."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        scores = [
            float(loglik_score_batch(exp, x, self.train_cfg.n_draws, rng)[0])
            for exp in self.experts
        ]
        return int(np.argmax(scores))

    def predict(self, x: np.ndarray, rng: np.random.Generator) -> int:
        """Class prediction of the selected expert's classifier."""
        idx = self.select_expert(x, rng)
        logits, _ = mlp_forward(
            self.experts[idx].classifier, np.asarray(x, dtype=np.float64).reshape(1, -1)
        )
        return int(np.argmax(logits[0]))

    def predict_batch(self, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Vectorized predict over the rows of xs (same routing rule)."""
        xs = np.asarray(xs, dtype=np.float64)
        scores = np.column_stack(
            [loglik_score_batch(exp, xs, self.train_cfg.n_draws, rng) for exp in self.experts]
        )
        selected = np.argmax(scores, axis=1)
        out = np.empty(xs.shape[0], dtype=np.int64)
        for k, exp in enumerate(self.experts):
            mask = selected == k
            if mask.any():
                logits, _ = mlp_forward(exp.classifier, xs[mask])
                out[mask] = np.argmax(logits, axis=1)
        return out
