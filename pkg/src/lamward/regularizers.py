"""Information regularizers applied to latent actions.

Three families restrict what the inverse-dynamics latent can carry:

* ``sparse``: a variance/covariance/magnitude batch penalty plus a per-sample
  energy with an L2-norm hinge and an L1 term whose weight is the capacity
  knob,
* ``noisy``: a KL penalty against the unit Gaussian over a sampled latent
  (the weight beta is the capacity knob),
* ``discrete``: classical vector quantization against a learned codebook
  with a straight-through estimator and periodic reuse of dead codes.

``none`` applies no penalty and ``deterministic`` removes the latent
entirely; both exist so capacity sweeps have their endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .tensor import (
    Tensor,
    absolute,
    exp,
    matmul,
    relu,
    sqrt,
    square,
    stop_gradient,
    take,
    tensor_mean,
    tensor_sum,
    transpose,
)

KINDS = ("sparse", "noisy", "discrete", "none", "deterministic")

SPARSE_L1_GRID = (0.4, 0.1, 0.08, 0.06, 0.05, 0.04, 0.02, 0.01)
NOISY_BETA_GRID = (5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6)


@dataclass(frozen=True)
class RegularizerCfg:
    kind: str = "sparse"
    l1_weight: float = 0.01
    l2_weight: float = 1.0
    var_weight: float = 0.1
    cov_weight: float = 0.001
    mean_weight: float = 0.1
    var_eps: float = 1e-4
    beta: float = 1e-4
    codebook_size: int = 64
    commit_weight: float = 0.25
    reset_period: int = 200

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.codebook_size < 1 or self.reset_period < 1:
            raise ValueError("codebook_size and reset_period must be positive")

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegularizerCfg":
        return cls(**d)


# -- sparse family ---------------------------------------------------------


def sparse_sample_energy(z: Tensor, cfg: RegularizerCfg) -> Tensor:
    """Per-sample energy: l2 * max(sqrt(D) - ||z||_2^2, 0) + l1 * ||z||_1.

    Accepts (D,) or (N, D); reduces over the last axis.  The hinge compares
    the squared norm against sqrt(D), pushing latents onto a shell, while
    the L1 term pulls coordinates to exact zero.
    """
    d = z.shape[-1]
    norm_sq = tensor_sum(square(z), axis=-1)
    hinge = relu(math.sqrt(d) - norm_sq)
    l1 = tensor_sum(absolute(z), axis=-1)
    return cfg.l2_weight * hinge + cfg.l1_weight * l1


def sparse_batch_penalty(z: Tensor, cfg: RegularizerCfg) -> Tensor:
    """Batch penalty: variance hinge + off-diagonal covariance + signed mean,
    plus the mean per-sample energy.

    Variance and covariance use the population (1/N) convention.  The std
    inside the variance hinge is sqrt(Var + eps) - sqrt(eps): exact at full
    collapse (Var = 0 contributes exactly 1) with a finite gradient there.
    """
    if z.ndim != 2:
        raise ValueError("batch penalty expects (N, D) latents")
    n, d = z.shape
    if n < 2:
        raise ValueError("batch statistics need at least 2 samples")
    mu = tensor_mean(z, axis=0)
    centered = z - mu
    var = tensor_mean(square(centered), axis=0)
    std = sqrt(var + cfg.var_eps) - math.sqrt(cfg.var_eps)
    var_term = cfg.var_weight * tensor_mean(relu(1.0 - std))
    if d > 1:
        cov = matmul(transpose(centered), centered) * (1.0 / n)
        off_mask = 1.0 - np.eye(d)
        cov_term = cfg.cov_weight * (1.0 / (d * (d - 1))) * tensor_sum(square(cov) * Tensor(off_mask))
    else:
        cov_term = Tensor(0.0)
    mean_term = cfg.mean_weight * tensor_mean(z)
    return var_term + cov_term + mean_term + tensor_mean(sparse_sample_energy(z, cfg))


# -- noisy family ----------------------------------------------------------


def kl_per_sample(mu: Tensor, log_sigma: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) per sample, reduced over the last axis."""
    sigma_sq = exp(2.0 * log_sigma)
    return 0.5 * tensor_sum(square(mu) + sigma_sq - 1.0 - 2.0 * log_sigma, axis=-1)


def kl_penalty(mu: Tensor, log_sigma: Tensor, cfg: RegularizerCfg) -> Tensor:
    """beta-weighted batch-mean KL, added to the minimized objective."""
    return cfg.beta * tensor_mean(kl_per_sample(mu, log_sigma))


# -- discrete family -------------------------------------------------------


class Codebook:
    """Learned code vectors with usage tracking and dead-code reuse."""

    def __init__(self, cfg: RegularizerCfg, latent_dim: int, rng: Rng):
        self.cfg = cfg
        # spread init: far codes stay dead without the reset mechanism,
        # which is exactly the failure mode the reset exists to fix
        init = rng.normal("codebook/init", (cfg.codebook_size, latent_dim)) * 0.5
        self.codes = Tensor(init, requires_grad=True)
        self.usage = np.zeros(cfg.codebook_size, dtype=np.int64)

    def nearest(self, z_e_data: np.ndarray) -> np.ndarray:
        """Index of the nearest code per row; ties take the lowest index."""
        c = self.codes.data
        d2 = np.sum(z_e_data**2, axis=1, keepdims=True) - 2.0 * z_e_data @ c.T + np.sum(c**2, axis=1)
        return np.argmin(d2, axis=1)

    def quantize(self, z_e: Tensor, count_usage: bool = True):
        """Straight-through quantization.

        Returns ``(z_st, indices, vq_loss)`` where ``z_st`` carries the
        selected code values forward but routes gradients to ``z_e``, and
        ``vq_loss = mean_i [ ||sg(z_e_i) - c_i||^2 + commit * ||z_e_i - sg(c_i)||^2 ]``
        with the first term training the codebook and the second committing
        the encoder to its code.
        """
        idx = self.nearest(z_e.data)
        if count_usage:
            np.add.at(self.usage, idx, 1)
        c_sel = take(self.codes, idx)
        code_term = tensor_mean(tensor_sum(square(stop_gradient(z_e) - c_sel), axis=1))
        commit_term = tensor_mean(tensor_sum(square(z_e - stop_gradient(c_sel)), axis=1))
        vq_loss = code_term + self.cfg.commit_weight * commit_term
        z_st = z_e + stop_gradient(c_sel - z_e)
        return z_st, idx, vq_loss

    def dead_codes(self) -> int:
        return int(np.sum(self.usage == 0))

    def reset_unused(self, z_e_data: np.ndarray, rng: Rng, label: str) -> int:
        """Reassign codes unused since the last reset to noisy batch latents.

        Zeroes all usage counters afterwards; returns how many codes moved.
        """
        dead = self.usage == 0
        n_dead = int(np.sum(dead))
        if n_dead and len(z_e_data):
            rows = rng.integers(f"{label}/rows", (n_dead,), 0, len(z_e_data))
            noise = rng.normal(f"{label}/noise", (n_dead, z_e_data.shape[1])) * 0.01
            self.codes.data[dead] = z_e_data[rows] + noise
        self.usage[:] = 0
        return n_dead
