"""One mixture component: a VAE for fit scoring, replay and latent
inference, plus a classifier head for prediction.

The VAE objective is the negated evidence lower bound with a diagonal
Gaussian posterior, closed-form KL against a standard-normal prior and
a unit-variance Gaussian decoder likelihood.  All gradients are
analytic and validated by finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError, TrainingError
from .nn import MlpParams, init_mlp, mlp_backward, mlp_forward, softmax_cross_entropy

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class Expert:
    """VAE (encoder outputs [mu | logvar], decoder outputs the
    reconstruction mean) plus a classifier over the same inputs."""

    encoder: MlpParams
    decoder: MlpParams
    classifier: MlpParams
    latent_dim: int
    frozen: bool = False
    id: int = 0

    def __post_init__(self):
        if self.encoder.output_dim != 2 * self.latent_dim:
            raise ShapeError(
                f"encoder output dim {self.encoder.output_dim} != 2 x latent_dim"
            )
        if self.decoder.input_dim != self.latent_dim:
            raise ShapeError(f"decoder input dim {self.decoder.input_dim} != latent_dim")

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim


@dataclass(frozen=True)
class ExpertArchitecture:
    """Layer widths used when a fresh expert is spawned."""

    input_dim: int
    latent_dim: int
    class_count: int
    enc_hidden: tuple[int, ...] = (200,)
    dec_hidden: tuple[int, ...] = (200,)
    clf_hidden: tuple[int, ...] = (400, 400)


def new_expert(arch: ExpertArchitecture, rng: np.random.Generator, expert_id: int = 0) -> Expert:
    """Randomly initialized expert; hidden layers relu, heads identity."""
    enc_dims = [arch.input_dim, *arch.enc_hidden, 2 * arch.latent_dim]
    dec_dims = [arch.latent_dim, *arch.dec_hidden, arch.input_dim]
    clf_dims = [arch.input_dim, *arch.clf_hidden, arch.class_count]
    acts = lambda n: ["relu"] * (n - 2) + ["identity"]
    return Expert(
        encoder=init_mlp(enc_dims, acts(len(enc_dims)), rng),
        decoder=init_mlp(dec_dims, acts(len(dec_dims)), rng),
        classifier=init_mlp(clf_dims, acts(len(clf_dims)), rng),
        latent_dim=arch.latent_dim,
        frozen=False,
        id=expert_id,
    )


def _split_encoder_output(expert: Expert, enc_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return enc_out[:, : expert.latent_dim], enc_out[:, expert.latent_dim :]


def elbo_loss(expert: Expert, batch: np.ndarray, noise: np.ndarray):
    """Negated ELBO of a batch and the VAE parameter gradients.

    loss = mean over rows of [ -log N(x; dec(z), I) + KL(q(z|x) || N(0, I)) ]
    with z = mu + exp(logvar/2) * noise.  Returns (loss, enc_grads, dec_grads).
    """
    batch = np.asarray(batch, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    n = batch.shape[0]
    if noise.shape != (n, expert.latent_dim):
        raise ShapeError(f"noise shape {noise.shape} != ({n}, {expert.latent_dim})")
    enc_out, enc_tape = mlp_forward(expert.encoder, batch)
    mu, logvar = _split_encoder_output(expert, enc_out)
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    recon, dec_tape = mlp_forward(expert.decoder, z)

    d = batch.shape[1]
    resid = recon - batch
    recon_nll = 0.5 * (resid**2).sum(axis=1) + 0.5 * d * LOG_2PI
    kl = 0.5 * (mu**2 + np.exp(logvar) - logvar - 1.0).sum(axis=1)
    loss = float((recon_nll + kl).mean())
    if not np.isfinite(loss):
        raise TrainingError("non-finite ELBO loss")

    dec_grads, dz = mlp_backward(expert.decoder, dec_tape, resid / n)
    dmu = dz + mu / n
    dlogvar = dz * noise * 0.5 * std + 0.5 * (np.exp(logvar) - 1.0) / n
    enc_grads, _ = mlp_backward(
        expert.encoder, enc_tape, np.hstack([dmu, dlogvar])
    )
    return loss, enc_grads, dec_grads


def classifier_loss(expert: Expert, features: np.ndarray, labels):
    """Mean cross-entropy of the classifier over all given samples.

    Returns (loss, clf_grads).  Every sample must carry a label.
    """
    labels = np.asarray(labels, dtype=object)
    if any(y is None for y in labels):
        raise InputError("classifier loss requires labels for every sample")
    labels = labels.astype(np.int64)
    logits, tape = mlp_forward(expert.classifier, features)
    loss, logit_grad = softmax_cross_entropy(logits, labels)
    grads, _ = mlp_backward(expert.classifier, tape, logit_grad)
    return loss, grads


def generate_replay(expert: Expert, n: int, rng: np.random.Generator) -> np.ndarray:
    """n decoder means for latents drawn from the standard-normal prior."""
    if n < 1:
        raise InputError("need n >= 1 replay samples")
    z = rng.standard_normal((n, expert.latent_dim))
    out, _ = mlp_forward(expert.decoder, z)
    return out


def infer_latents(expert: Expert, samples: np.ndarray) -> np.ndarray:
    """Posterior means mu(x); deterministic, consumes no randomness."""
    enc_out, _ = mlp_forward(expert.encoder, samples)
    mu, _ = _split_encoder_output(expert, enc_out)
    return mu


def loglik_score(expert: Expert, sample: np.ndarray, n_draws: int, rng: np.random.Generator) -> float:
    """ELBO estimate of log p(x), averaged over n_draws posterior draws."""
    sample = np.asarray(sample, dtype=np.float64).reshape(1, -1)
    return float(loglik_score_batch(expert, sample, n_draws, rng)[0])


def loglik_score_batch(
    expert: Expert, samples: np.ndarray, n_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized loglik_score over the rows of `samples`.

    Rows are processed in cache-sized chunks; the rng is consumed in
    chunk order, so scores are deterministic for a fixed rng state.
    """
    if n_draws < 1:
        raise InputError("need n_draws >= 1")
    samples = np.asarray(samples, dtype=np.float64)
    n, d = samples.shape
    out = np.empty(n)
    chunk = 2048
    for start in range(0, n, chunk):
        x = samples[start : start + chunk]
        enc_out, _ = mlp_forward(expert.encoder, x)
        mu, logvar = _split_encoder_output(expert, enc_out)
        std = np.exp(0.5 * logvar)
        kl = 0.5 * (mu**2 + np.exp(logvar) - logvar - 1.0).sum(axis=1)
        recon_ll = np.zeros(x.shape[0])
        for _ in range(n_draws):
            noise = rng.standard_normal(mu.shape)
            recon, _ = mlp_forward(expert.decoder, mu + std * noise)
            recon -= x
            np.square(recon, out=recon)
            recon_ll += -0.5 * recon.sum(axis=1) - 0.5 * d * LOG_2PI
        out[start : start + chunk] = recon_ll / n_draws - kl
    return out
