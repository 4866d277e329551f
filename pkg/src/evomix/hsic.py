"""Kernel machinery and the finite-sample HSIC dependence estimator.

The expansion signal compares, per expert, the latents of generative
replay samples against the latents of samples drawn from the memory
buffer.  Both sets are embedded with an RBF (or linear) kernel and the
biased centered-trace HSIC estimator is evaluated on the index-paired
set.  `hsic_naive_oracle` re-derives the same statistic by explicit
O(m^2) summation of the three expectation terms and exists purely as an
independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from . import expert as expert_mod


@dataclass(frozen=True)
class KernelSpec:
    """kind: "rbf" or "linear"; bandwidth None means median heuristic."""

    kind: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and self.bandwidth is not None and not self.bandwidth > 0:
            raise InputError("explicit rbf bandwidth must be > 0")


@dataclass
class PairedSampleSet:
    """Index-paired draws (left[i], right[i]) from a joint distribution."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise InputError("paired samples must be 2-D matrices")
        if self.left.shape[0] != self.right.shape[0]:
            raise InputError(
                f"row counts differ: {self.left.shape[0]} vs {self.right.shape[0]}"
            )
        if self.left.shape[0] < 2:
            raise InputError("need m >= 2 paired samples")

    @property
    def m(self) -> int:
        return self.left.shape[0]


def _pairwise_sq_dists(samples: np.ndarray) -> np.ndarray:
    sq = (samples * samples).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * samples @ samples.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def distance_quantile(samples: np.ndarray, q: float) -> float:
    """q-quantile of the pairwise Euclidean distances over distinct pairs."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise InputError("need >= 2 rows to take pairwise distances")
    d2 = _pairwise_sq_dists(samples)
    iu = np.triu_indices(samples.shape[0], k=1)
    return float(np.quantile(np.sqrt(d2[iu]), q))


def median_heuristic(samples: np.ndarray) -> float:
    """Median pairwise distance, falling back to 1.0 when it degenerates to 0."""
    med = distance_quantile(samples, 0.5)
    return med if med > 0.0 else 1.0


def gram(samples: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """m x m kernel matrix: rbf_ij = exp(-|zi-zj|^2 / (2 sigma^2)), linear_ij = <zi, zj>."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise InputError("samples must be a 2-D matrix")
    if not np.all(np.isfinite(samples)):
        raise InputError("non-finite sample values")
    if spec.kind == "linear":
        k = samples @ samples.T
        return (k + k.T) / 2.0
    sigma = spec.bandwidth if spec.bandwidth is not None else median_heuristic(samples)
    k = np.exp(-_pairwise_sq_dists(samples) / (2.0 * sigma * sigma))
    k = (k + k.T) / 2.0
    np.fill_diagonal(k, 1.0)
    return k


def hsic_biased(k: np.ndarray, l: np.ndarray) -> float:
    """Biased HSIC estimator tr(K H L H) / (m-1)^2, H = I - (1/m) 11^T.

    Computed by double-centering both Grams; for symmetric K, L the
    trace equals the elementwise sum of the centered matrices' product.
    """
    k = np.asarray(k, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InputError(f"K must be square, got {k.shape}")
    if k.shape != l.shape:
        raise InputError(f"Gram sizes differ: {k.shape} vs {l.shape}")
    m = k.shape[0]
    if m < 2:
        raise InputError("need m >= 2")
    kc = k - k.mean(axis=0) - k.mean(axis=1)[:, None] + k.mean()
    lc = l - l.mean(axis=0) - l.mean(axis=1)[:, None] + l.mean()
    return float((kc * lc).sum() / (m - 1) ** 2)


def _kernel_scalar(a: np.ndarray, b: np.ndarray, kind: str, sigma: float | None) -> float:
    if kind == "linear":
        return float(np.dot(a, b))
    d2 = float(((a - b) ** 2).sum())
    return math.exp(-d2 / (2.0 * sigma * sigma))


def hsic_naive_oracle(pairs: PairedSampleSet, kspec: KernelSpec, lspec: KernelSpec) -> float:
    """Same statistic as hsic_biased, evaluated the slow direct way.

    Sums the three empirical expectation terms E[kl] + E[k]E[l]
    - 2 E_i[E_j[k] E_j[l]] over index pairs, then rescales by
    m^2/(m-1)^2 so the normalization matches the centered-trace
    estimator exactly (the two forms are algebraically identical).
    Test-only oracle; O(m^2) python loops.
    """
    m = pairs.m
    ksig = None
    lsig = None
    if kspec.kind == "rbf":
        ksig = kspec.bandwidth if kspec.bandwidth is not None else median_heuristic(pairs.left)
    if lspec.kind == "rbf":
        lsig = lspec.bandwidth if lspec.bandwidth is not None else median_heuristic(pairs.right)
    kmat = [[_kernel_scalar(pairs.left[i], pairs.left[j], kspec.kind, ksig) for j in range(m)]
            for i in range(m)]
    lmat = [[_kernel_scalar(pairs.right[i], pairs.right[j], lspec.kind, lsig) for j in range(m)]
            for i in range(m)]
    term_joint = 0.0
    for i in range(m):
        for j in range(m):
            term_joint += kmat[i][j] * lmat[i][j]
    term_joint /= m * m
    mean_k = sum(sum(row) for row in kmat) / (m * m)
    mean_l = sum(sum(row) for row in lmat) / (m * m)
    term_cross = 0.0
    for i in range(m):
        row_k = sum(kmat[i]) / m
        row_l = sum(lmat[i]) / m
        term_cross += row_k * row_l
    term_cross /= m
    v_stat = term_joint + mean_k * mean_l - 2.0 * term_cross
    return v_stat * (m * m) / ((m - 1) * (m - 1))


@dataclass
class HsicConfig:
    """Settings for the per-expert expansion statistic.

    m:        samples per side (capped at the buffer size at call time).
    kernel:   kernel family applied to both latent sets.
    bandwidth_scope: where a median-heuristic bandwidth is measured --
        "pooled" measures it on the union of replay and memory latents
        (the displacement between the two clouds then widens the
        bandwidth and drives the statistic toward zero), "per_matrix"
        measures each Gram's bandwidth on its own samples.
    bandwidth_quantile: pairwise-distance quantile used as bandwidth.
    """

    m: int = 256
    kernel: KernelSpec = field(default_factory=KernelSpec)
    bandwidth_scope: str = "pooled"
    bandwidth_quantile: float = 0.5

    def __post_init__(self):
        if self.bandwidth_scope not in ("pooled", "per_matrix"):
            raise InputError(f"unknown bandwidth scope {self.bandwidth_scope!r}")
        if not 0.0 < self.bandwidth_quantile < 1.0:
            raise InputError("bandwidth_quantile must be in (0, 1)")


def expert_memory_hsic(
    expert,
    buffer_samples: np.ndarray,
    m: int,
    rng: np.random.Generator,
    cfg: HsicConfig | None = None,
) -> float:
    """HSIC between one expert's replay latents and the memory's latents.

    Draws m replay samples from the expert, m memory samples uniformly
    without replacement, infers both latent sets with the expert's
    encoder, pairs them by index position and evaluates hsic_biased.
    """
    cfg = cfg or HsicConfig()
    buffer_samples = np.asarray(buffer_samples, dtype=np.float64)
    if m < 2:
        raise InputError("need m >= 2")
    if buffer_samples.shape[0] < m:
        raise InputError(f"buffer has {buffer_samples.shape[0]} samples, need >= {m}")
    replay = expert_mod.generate_replay(expert, m, rng)
    idx = rng.choice(buffer_samples.shape[0], size=m, replace=False)
    z_replay = expert_mod.infer_latents(expert, replay)
    z_memory = expert_mod.infer_latents(expert, buffer_samples[idx])

    kspec = lspec = cfg.kernel
    if cfg.kernel.kind == "rbf" and cfg.kernel.bandwidth is None:
        if cfg.bandwidth_scope == "pooled":
            pooled = np.vstack([z_replay, z_memory])
            sigma = distance_quantile(pooled, cfg.bandwidth_quantile)
            sigma = sigma if sigma > 0.0 else 1.0
            kspec = lspec = KernelSpec("rbf", sigma)
        else:
            sk = distance_quantile(z_replay, cfg.bandwidth_quantile)
            sl = distance_quantile(z_memory, cfg.bandwidth_quantile)
            kspec = KernelSpec("rbf", sk if sk > 0.0 else 1.0)
            lspec = KernelSpec("rbf", sl if sl > 0.0 else 1.0)
    return hsic_biased(gram(z_replay, kspec), gram(z_memory, lspec))
