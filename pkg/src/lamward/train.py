"""Teacher-forced joint training of the IDM and forward model.

Each step samples a batch of pre-encoded episodes, infers latents for every
transition, predicts every next representation in one pass from ground-truth
contexts, and descends the L1 prediction error plus the active regularizer
term.  All stochasticity is addressed by the absolute step number, so a run
resumed from a checkpoint replays the exact same batches and noise as an
uninterrupted one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .model import ModelBundle, build_contexts, forward_step, idm_infer, transition_pairs
from .optim import warmup_cosine
from .regularizers import kl_penalty, sparse_batch_penalty
from .rng import Rng
from .tensor import Tensor, absolute, grad, tensor_mean
from .worldgen import Episode

LOSS_CSV_COLUMNS = ("step", "total", "pred", "reg", "vq", "dead_codes")


@dataclass(frozen=True)
class TrainCfg:
    steps: int = 3000
    batch_size: int = 32
    lr: float = 6.25e-4
    weight_decay: float = 0.04
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_frac: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainCfg":
        return cls(**d)


class TrainingDiverged(RuntimeError):
    """Raised when a loss term stops being finite; carries diagnostics."""


def encode_dataset(bundle: ModelBundle, episodes: list[Episode]) -> np.ndarray:
    return bundle.encoder.encode_dataset(episodes)


def train_step(bundle: ModelBundle, batch_reprs: np.ndarray, cfg: TrainCfg, step: int) -> dict:
    """One optimization step on a (B, T, R) batch; returns the loss report."""
    rng = Rng(cfg.seed)
    s_t, s_tp1 = transition_pairs(batch_reprs)
    noise = None
    if bundle.reg.kind == "noisy":
        noise = rng.normal(f"reparam/{step}", s_t.shape[:1] + (bundle.latent_dim,))
    try:
        lat = idm_infer(bundle, s_t, s_tp1, noise=noise, train=True)
        ctx = build_contexts(batch_reprs, bundle.window)
        preds = forward_step(bundle, ctx, lat.z)
        pred_loss = tensor_mean(absolute(preds - Tensor(s_tp1)))

        kind = bundle.reg.kind
        if kind == "sparse":
            reg_loss = sparse_batch_penalty(lat.z, bundle.reg)
        elif kind == "noisy":
            reg_loss = kl_penalty(lat.mu, lat.log_sigma, bundle.reg)
        else:
            reg_loss = Tensor(0.0)
        vq_loss = lat.vq_loss if lat.vq_loss is not None else Tensor(0.0)
        total = pred_loss + reg_loss + vq_loss

        params = bundle.parameters()
        grads = grad(total, params)
    except FloatingPointError as exc:  # an op or gradient went non-finite
        raise TrainingDiverged(f"numerical failure at step {step}: {exc}") from exc

    if not np.isfinite(total.data):
        raise TrainingDiverged(
            f"non-finite loss at step {step}: pred={pred_loss.data} reg={reg_loss.data} vq={vq_loss.data}"
        )
    opt = bundle.ensure_optimizer(cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
    lr = cfg.lr * warmup_cosine(step, cfg.steps, cfg.warmup_frac)
    opt.step(params, grads, lr=lr)

    dead = 0
    if bundle.codebook is not None:
        dead = bundle.codebook.dead_codes()
        if (step + 1) % bundle.reg.reset_period == 0:
            bundle.codebook.reset_unused(lat.pre_quant.data, rng, f"reset/{step}")
    return {
        "step": step,
        "total": float(total.data),
        "pred": float(pred_loss.data),
        "reg": float(reg_loss.data),
        "vq": float(vq_loss.data),
        "dead_codes": dead,
        "lr": lr,
    }


def train_step_episodes(bundle: ModelBundle, episodes: list[Episode], cfg: TrainCfg, step: int = 0) -> dict:
    """Convenience wrapper: encode raw episodes, then take one step."""
    return train_step(bundle, encode_dataset(bundle, episodes), cfg, step)


def train(
    bundle: ModelBundle,
    reprs: np.ndarray,
    cfg: TrainCfg,
    until_step: int | None = None,
    log_every: int = 0,
) -> list[dict]:
    """Run from the bundle's current step to ``until_step`` (default: cfg.steps).

    Returns one report per executed step.  Batches are sampled with
    replacement from the first axis of ``reprs`` using streams keyed by the
    absolute step, which is what makes resumption bit-exact.
    """
    target = cfg.steps if until_step is None else until_step
    if target > cfg.steps:
        raise ValueError("cannot train past cfg.steps with a cosine schedule")
    rng = Rng(cfg.seed)
    n = reprs.shape[0]
    reports = []
    while bundle.step < target:
        step = bundle.step
        idx = rng.integers(f"batch/{step}", (cfg.batch_size,), 0, n)
        report = train_step(bundle, reprs[idx], cfg, step)
        bundle.step = step + 1
        reports.append(report)
        if log_every and (step + 1) % log_every == 0:
            print(
                f"step {step + 1}/{cfg.steps} total {report['total']:.4f} "
                f"pred {report['pred']:.4f} reg {report['reg']:.4f}"
            )
    return reports


def reports_to_csv(reports: list[dict], header_lines: list[str] | None = None) -> str:
    """Loss-curve CSV with fixed columns and optional '#' metadata lines."""
    buf = io.StringIO()
    for line in header_lines or []:
        buf.write(f"# {line}\n")
    buf.write(",".join(LOSS_CSV_COLUMNS) + "\n")
    for rep in reports:
        buf.write(",".join(repr(rep[c]) if isinstance(rep[c], float) else str(rep[c]) for c in LOSS_CSV_COLUMNS) + "\n")
    return buf.getvalue()
