"""Drawing latent actions without an inverse-dynamics pass.

Each regularizer family implies its own sampler: Langevin dynamics on the
sparse energy, the unit-Gaussian prior for the noisy head, and uniform code
selection for the discrete head.  A linear separability probe reports how
distinguishable sampled latents are from IDM-inferred ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regularizers import Codebook, RegularizerCfg, sparse_sample_energy
from .rng import Rng
from .tensor import Tensor, grad, tensor_sum


@dataclass(frozen=True)
class SgldCfg:
    step_size: float = 0.01
    steps: int = 2000
    burn_in_frac: float = 0.2
    thin: int = 10
    init: str = "normal"  # or "uniform" over [-init_scale, init_scale]
    init_scale: float = 1.0
    bound: float = 100.0  # infinity-norm divergence guard
    noise: bool = True  # False: pure gradient descent (debug limit)

    def __post_init__(self):
        if self.step_size <= 0 or self.thin < 1:
            raise ValueError("step_size must be positive and thin >= 1")
        if not 0 <= self.burn_in_frac < 1:
            raise ValueError("burn_in_frac must lie in [0, 1)")
        if self.steps <= int(self.steps * self.burn_in_frac):
            raise ValueError("steps must exceed the burn-in span")
        if self.init not in ("normal", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SgldCfg":
        return cls(**d)


class SamplerDiverged(RuntimeError):
    pass


def sgld_init(cfg: SgldCfg, dim: int, rng: Rng, label: str, n_chains: int) -> np.ndarray:
    if cfg.init == "normal":
        return rng.normal(f"{label}/init", (n_chains, dim)) * cfg.init_scale
    return (rng.uniform(f"{label}/init", (n_chains, dim)) * 2 - 1) * cfg.init_scale


def sgld_sample(
    energy_and_grad,
    dim: int,
    cfg: SgldCfg,
    rng: Rng,
    label: str = "sgld",
    n_chains: int = 1,
    z0: np.ndarray | None = None,
) -> np.ndarray:
    """Langevin chain: z <- z - (step/2) * dE/dz + noise, noise ~ N(0, step).

    ``energy_and_grad(z)`` takes (C, D) and returns per-chain energies (C,)
    and the gradient array (C, D).  Samples are kept after the burn-in span
    at the thinning stride; the result is (n_chains, n_kept, D).
    """
    z = np.array(z0, dtype=np.float64) if z0 is not None else sgld_init(cfg, dim, rng, label, n_chains)
    if z.shape != (n_chains, dim):
        raise ValueError(f"z0 must have shape {(n_chains, dim)}")
    burn = int(cfg.steps * cfg.burn_in_frac)
    half = 0.5 * cfg.step_size
    noise_std = np.sqrt(cfg.step_size)
    kept: list[np.ndarray] = []
    for t in range(cfg.steps):
        _, g = energy_and_grad(z)
        z = z - half * g
        if cfg.noise:
            z = z + noise_std * rng.normal(f"{label}/noise/{t}", z.shape)
        peak = np.abs(z).max()
        if not np.isfinite(peak) or peak > cfg.bound:
            raise SamplerDiverged(f"chain left the box at step {t}: max|z| = {peak:.3g} > {cfg.bound}")
        if t >= burn and (t - burn) % cfg.thin == 0:
            kept.append(z.copy())
    return np.stack(kept, axis=1)


def sparse_energy_fn(cfg: RegularizerCfg):
    """The per-sample sparse energy and its gradient, reusing the training
    ops so the subgradient conventions match exactly."""

    def energy_and_grad(z_data: np.ndarray):
        z = Tensor(z_data, requires_grad=True)
        per_chain = sparse_sample_energy(z, cfg)
        g = grad(tensor_sum(per_chain), {"z": z})["z"]
        return per_chain.data.copy(), g

    return energy_and_grad


def prior_sample(dim: int, rng: Rng, label: str = "prior", n: int = 1) -> np.ndarray:
    """n rows of independent standard normals — the noisy head's prior."""
    return rng.normal(label, (n, dim))


def codebook_sample(
    codebook: Codebook, rng: Rng, label: str = "codes", n: int = 1, used_only: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly drawn code vectors; (rows, indices)."""
    if used_only:
        pool = np.flatnonzero(codebook.usage > 0)
        if pool.size == 0:
            raise ValueError("no used codes to sample from")
    else:
        pool = np.arange(codebook.cfg.codebook_size)
    picks = pool[rng.integers(label, (n,), 0, pool.size)]
    return codebook.codes.data[picks].copy(), picks


def separability_probe(z_sampled: np.ndarray, z_inferred: np.ndarray, rng: Rng, label: str = "probe") -> float:
    """Held-out accuracy of a ridge-regression linear classifier telling the
    two latent populations apart; near 0.5 means indistinguishable."""
    x = np.concatenate([z_sampled, z_inferred])
    y = np.concatenate([-np.ones(len(z_sampled)), np.ones(len(z_inferred))])
    n = len(x)
    order = np.argsort(rng.uniform(label, (n,)), kind="stable")
    x, y = x[order], y[order]
    half = n // 2
    xb = np.concatenate([x, np.ones((n, 1))], axis=1)
    a = xb[:half].T @ xb[:half] + 1e-3 * np.eye(xb.shape[1])
    w = np.linalg.solve(a, xb[:half].T @ y[:half])
    pred = np.sign(xb[half:] @ w)
    pred[pred == 0] = 1.0
    return float(np.mean(pred == y[half:]))
