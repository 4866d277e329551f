"""Dense-network substrate: MLP forward/backward, losses and Adam.

Everything operates on float64 row-major numpy arrays; a "matrix" is a
2-D array whose rows are samples.  No autodiff: each operation returns
analytic gradients that are checked against finite differences in the
test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError, TrainingError

ACTIVATIONS = ("relu", "identity", "softplus")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "softplus":
        return np.logaddexp(0.0, z)
    raise InputError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    """d activation / d pre-activation, evaluated at pre-activation z."""
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    if name == "softplus":
        # sigmoid(z), computed stably for large |z|
        return np.exp(-np.logaddexp(0.0, -z))
    raise InputError(f"unknown activation {name!r}")


@dataclass
class MlpParams:
    """Weights of a dense MLP.

    layers[i] is a (W, b) pair with W shaped (in_dim, out_dim) and b
    shaped (out_dim,); activations[i] is applied after layer i.
    Consecutive layer dimensions must chain.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    activations: list[str]

    def __post_init__(self):
        if len(self.layers) != len(self.activations):
            raise ShapeError("one activation tag per layer required")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise InputError(f"unknown activation {act!r}")
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ShapeError(f"layer {i}: W {w.shape} and b {b.shape} inconsistent")
            if i > 0 and self.layers[i - 1][0].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {i - 1} output dim {self.layers[i - 1][0].shape[1]} "
                    f"!= layer {i} input dim {w.shape[0]}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[1]


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> MlpParams:
    """He-style random init for the given layer widths.

    dims = [in, h1, ..., out]; len(activations) == len(dims) - 1.
    """
    if len(dims) < 2 or len(activations) != len(dims) - 1:
        raise ShapeError("dims must list >= 2 widths with one activation per layer")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        b = np.zeros(fan_out)
        layers.append((w, b))
    return MlpParams(layers=layers, activations=list(activations))


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass; returns (output, tape) with the tape holding the
    per-layer (input, pre-activation) pairs needed by mlp_backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"input must be 2-D, got shape {x.shape}")
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input dim {x.shape[1]} != first layer input dim {params.input_dim}")
    tape = []
    h = x
    for (w, b), act in zip(params.layers, params.activations):
        z = h @ w
        z += b
        tape.append((h, z))
        h = _activate(act, z)
    return h, tape


def mlp_backward(
    params: MlpParams, tape: list, output_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backward pass for a tape produced by mlp_forward on the same params.

    Returns ([(dW, db) per layer], gradient w.r.t. the forward input).
    """
    if len(tape) != len(params.layers):
        raise ShapeError("tape does not match params")
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != (tape[-1][1].shape[0], params.output_dim):
        raise ShapeError(
            f"output_grad shape {output_grad.shape} does not match forward output "
            f"({tape[-1][1].shape[0]}, {params.output_dim})"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    delta = output_grad
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        h_in, z = tape[i]
        if h_in.shape[1] != w.shape[0]:
            raise ShapeError(f"stale tape at layer {i}")
        act = params.activations[i]
        if act == "relu":
            delta = delta * (z > 0.0)
        elif act != "identity":
            delta = delta * _activate_grad(act, z)
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        delta = delta @ w.T
    return grads, delta


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows and its gradient w.r.t. the logits.

    The gradient already includes the 1/n normalization, so each of its
    rows sums to zero.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"label outside [0, {logits.shape[1]})")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


@dataclass
class AdamState:
    """Adaptive-moment accumulators shaped like the parameters they update.

    `scratch` holds reusable work buffers so the hot update loop does
    not allocate; it carries no state between steps.
    """

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if not self.scratch:
            self.scratch = [(np.empty_like(w), np.empty_like(b)) for w, b in self.m]


def init_adam(params: MlpParams, lr: float = 1e-3) -> AdamState:
    zeros = lambda: [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
    return AdamState(m=zeros(), v=zeros(), lr=lr)


def adam_step(params: MlpParams, grads: list, state: AdamState) -> None:
    """One Adam update, in place on params and state.

    Bias correction is folded into scalar factors (algebraically equal
    to the textbook form) and the elementwise work runs through out=
    buffers; this path dominates CPU training cost.  Raises
    TrainingError on non-finite gradients so the caller can surface the
    failing training step.
    """
    if len(grads) != len(params.layers):
        raise ShapeError("gradient list does not match params")
    for g_pair in grads:
        for g in g_pair:
            # one-pass check: a non-finite entry makes the sum non-finite
            # (an all-finite overflow would too, and deserves the error)
            if not np.isfinite(float(g.sum())):
                raise TrainingError("non-finite gradient")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    sqrt_bc2 = np.sqrt(1.0 - state.beta2**t)
    # lr * (m/bc1) / (sqrt(v/bc2) + eps) == scale * m / (sqrt(v) + shift)
    scale = state.lr * sqrt_bc2 / bc1
    shift = state.eps * sqrt_bc2
    for i, (w, b) in enumerate(params.layers):
        for j, (param, grad) in enumerate(((w, grads[i][0]), (b, grads[i][1]))):
            if param.shape != grad.shape:
                raise ShapeError(f"gradient shape {grad.shape} != param shape {param.shape}")
            m = state.m[i][j]
            v = state.v[i][j]
            tmp = state.scratch[i][j]
            m *= state.beta1
            np.multiply(grad, 1.0 - state.beta1, out=tmp)
            m += tmp
            v *= state.beta2
            np.multiply(grad, grad, out=tmp)
            tmp *= 1.0 - state.beta2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp += shift
            np.divide(m, tmp, out=tmp)
            tmp *= scale
            param -= tmp
