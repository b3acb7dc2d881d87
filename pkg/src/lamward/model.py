"""Joint inverse-dynamics and forward model over frozen representations.

The inverse-dynamics model (IDM) maps a transition ``(s_t, s_{t+1})`` to a
latent action through the head selected by the regularizer kind.  The
forward model predicts ``s_{t+1}`` from a fixed window of past
representations, with each hidden layer modulated by (scale, shift, gate)
projections of the latent.  Gate projections start at exactly zero, so an
untrained forward model is provably independent of the latent: whatever the
latent later influences was learned, not wired in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import FrozenEncoder
from .optim import AdamW
from .regularizers import Codebook, RegularizerCfg
from .rng import Rng
from .tensor import Tensor, concat, exp, matmul, no_grad, tanh

LATENT_SOURCES = ("idm", "given", "controller")


@dataclass
class LatentActions:
    """Batched latents plus whatever the head exposes for its penalty."""

    z: Tensor
    mu: Tensor | None = None
    log_sigma: Tensor | None = None
    pre_quant: Tensor | None = None
    codes: np.ndarray | None = None
    vq_loss: Tensor | None = None


def _linear_init(rng: Rng, label: str, fan_in: int, fan_out: int, scale: float | None = None) -> Tensor:
    s = (1.0 / math.sqrt(fan_in)) if scale is None else scale
    return Tensor(rng.normal(label, (fan_in, fan_out)) * s, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class ModelBundle:
    """Everything one trained artifact owns: encoder, IDM, forward model,
    codebook, optimizer state, and the step counter."""

    def __init__(
        self,
        encoder: FrozenEncoder,
        reg: RegularizerCfg,
        latent_dim: int = 16,
        hidden_dim: int = 96,
        window: int = 2,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.reg = reg
        self.repr_dim = encoder.cfg.repr_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.window = window
        self.seed = seed
        self.step = 0
        self.opt: AdamW | None = None
        rng = Rng(seed)
        r, h, d = self.repr_dim, hidden_dim, latent_dim
        p: dict[str, Tensor] = {}
        if reg.kind != "deterministic":
            p["idm.w0"] = _linear_init(rng, "idm/w0", 2 * r, h)
            p["idm.b0"] = _zeros(h)
            p["idm.w1"] = _linear_init(rng, "idm/w1", h, h)
            p["idm.b1"] = _zeros(h)
            if reg.kind == "noisy":
                p["idm.mu_w"] = _linear_init(rng, "idm/mu_w", h, d)
                p["idm.mu_b"] = _zeros(d)
                p["idm.ls_w"] = _linear_init(rng, "idm/ls_w", h, d, scale=0.01 / math.sqrt(h))
                p["idm.ls_b"] = _zeros(d)
            else:
                p["idm.z_w"] = _linear_init(rng, "idm/z_w", h, d)
                p["idm.z_b"] = _zeros(d)
        for layer, fan_in in ((0, window * r), (1, h)):
            p[f"fwd.w{layer}"] = _linear_init(rng, f"fwd/w{layer}", fan_in, h)
            p[f"fwd.b{layer}"] = _zeros(h)
            p[f"fwd.mod{layer}.scale_w"] = _linear_init(rng, f"fwd/mod{layer}/scale_w", d, h)
            p[f"fwd.mod{layer}.scale_b"] = _zeros(h)
            p[f"fwd.mod{layer}.shift_w"] = _linear_init(rng, f"fwd/mod{layer}/shift_w", d, h)
            p[f"fwd.mod{layer}.shift_b"] = _zeros(h)
            # zero gate: the latent cannot influence predictions at init
            p[f"fwd.mod{layer}.gate_w"] = _zeros((d, h))
            p[f"fwd.mod{layer}.gate_b"] = _zeros(h)
        p["fwd.out_w"] = _linear_init(rng, "fwd/out_w", h, r)
        p["fwd.out_b"] = _zeros(r)
        self.params = p
        self.codebook = Codebook(reg, d, rng.derive("codebook")) if reg.kind == "discrete" else None

    def parameters(self) -> dict[str, Tensor]:
        """Trainable tensors only; encoder weights are plain arrays and can
        never appear here."""
        out = dict(self.params)
        if self.codebook is not None:
            out["codebook.codes"] = self.codebook.codes
        return out

    def ensure_optimizer(self, lr: float, betas, eps: float, weight_decay: float) -> AdamW:
        if self.opt is None:
            self.opt = AdamW(self.parameters(), lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        return self.opt


def idm_infer(
    bundle: ModelBundle,
    s_t: np.ndarray | Tensor,
    s_tp1: np.ndarray | Tensor,
    noise: np.ndarray | None = None,
    train: bool = False,
) -> LatentActions:
    """Latent actions for a batch of transitions.

    ``noise`` enables the sampling path of the noisy head (training); with
    ``noise=None`` the head returns its mean, which is evaluation mode.
    Codebook usage counters only move when ``train`` is set.
    """
    a = s_t if isinstance(s_t, Tensor) else Tensor(s_t)
    b = s_tp1 if isinstance(s_tp1, Tensor) else Tensor(s_tp1)
    n = a.shape[0]
    p = bundle.params
    kind = bundle.reg.kind
    if kind == "deterministic":
        return LatentActions(z=Tensor(np.zeros((n, bundle.latent_dim))))
    x = concat([a, b], axis=1)
    h = tanh(matmul(x, p["idm.w0"]) + p["idm.b0"])
    h = tanh(matmul(h, p["idm.w1"]) + p["idm.b1"])
    if kind == "noisy":
        mu = matmul(h, p["idm.mu_w"]) + p["idm.mu_b"]
        log_sigma = matmul(h, p["idm.ls_w"]) + p["idm.ls_b"]
        if noise is None:
            z = mu
        else:
            z = mu + exp(log_sigma) * Tensor(noise)
        return LatentActions(z=z, mu=mu, log_sigma=log_sigma)
    z_e = matmul(h, p["idm.z_w"]) + p["idm.z_b"]
    if kind == "discrete":
        z_st, idx, vq_loss = bundle.codebook.quantize(z_e, count_usage=train)
        return LatentActions(z=z_st, pre_quant=z_e, codes=idx, vq_loss=vq_loss)
    return LatentActions(z=z_e)  # sparse and none share the plain head


def forward_step(bundle: ModelBundle, ctx: np.ndarray | Tensor, z: np.ndarray | Tensor) -> Tensor:
    """One-step prediction from stacked context frames and a latent batch."""
    x = ctx if isinstance(ctx, Tensor) else Tensor(ctx)
    zt = z if isinstance(z, Tensor) else Tensor(z)
    p = bundle.params
    h = x
    for layer in range(2):
        w, b = p[f"fwd.w{layer}"], p[f"fwd.b{layer}"]
        h = tanh(matmul(h, w) + b)
        scale = matmul(zt, p[f"fwd.mod{layer}.scale_w"]) + p[f"fwd.mod{layer}.scale_b"]
        shift = matmul(zt, p[f"fwd.mod{layer}.shift_w"]) + p[f"fwd.mod{layer}.shift_b"]
        gate = matmul(zt, p[f"fwd.mod{layer}.gate_w"]) + p[f"fwd.mod{layer}.gate_b"]
        h = h + gate * (scale * h + shift)
    return tanh(matmul(h, p["fwd.out_w"]) + p["fwd.out_b"])


def transition_pairs(reprs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten (B, T, R) into aligned (B*(T-1), R) current/next arrays."""
    b, t, r = reprs.shape
    return reprs[:, :-1].reshape(-1, r), reprs[:, 1:].reshape(-1, r)


def build_contexts(reprs: np.ndarray, window: int) -> np.ndarray:
    """Per-transition context stacks, zero-padded before the first frame.

    Row k of the result is the context for predicting position ``t+1`` of the
    flattened transition k: frames ``t-window+1 .. t`` concatenated oldest
    first.
    """
    b, t, r = reprs.shape
    padded = np.concatenate([np.zeros((b, window - 1, r)), reprs], axis=1)
    slabs = [padded[:, off : off + t - 1] for off in range(window)]
    ctx = np.concatenate(slabs, axis=2)  # (B, T-1, window*R), oldest first
    return ctx.reshape(-1, window * r)


@dataclass
class RolloutResult:
    predictions: np.ndarray  # (B, T, R); the first ctx frames are the truth
    errors: np.ndarray  # (B, T-ctx) per-step mean absolute error
    mean_error: float


def rollout(
    bundle: ModelBundle,
    reprs_true: np.ndarray,
    ctx: int,
    source: str = "idm",
    latents: np.ndarray | None = None,
    controller=None,
    actions: np.ndarray | None = None,
) -> RolloutResult:
    """Unroll the forward model from ``ctx`` true frames to the episode end.

    Latents per transition come from the chosen source: ``idm`` infers them
    from the *true* consecutive frames (the ideal-information upper bound),
    ``given`` uses a provided (B, T-1, D) array, ``controller`` maps the
    episode's true actions plus the model's own current state.  Contexts are
    always the model's previous predictions past the ctx prefix.
    """
    if source not in LATENT_SOURCES:
        raise ValueError(f"unknown latent source {source!r}")
    b, t, r = reprs_true.shape
    if not 1 <= ctx <= t:
        raise ValueError(f"ctx must lie in [1, {t}]")
    with no_grad():
        if source == "idm":
            s_t, s_tp1 = transition_pairs(reprs_true)
            z_all = idm_infer(bundle, s_t, s_tp1).z.data.reshape(b, t - 1, -1)
        elif source == "given":
            if latents is None or latents.shape[:2] != (b, t - 1):
                raise ValueError("given-source rollout needs latents of shape (B, T-1, D)")
            z_all = latents
        else:
            if controller is None or actions is None:
                raise ValueError("controller-source rollout needs a controller and true actions")
        preds = reprs_true.copy()
        errors = np.zeros((b, t - ctx))
        for pos in range(ctx, t):
            frames = []
            for off in range(bundle.window, 0, -1):
                i = pos - off
                frames.append(np.zeros((b, r)) if i < 0 else preds[:, i])
            ctx_arr = np.concatenate(frames, axis=1)
            if source == "controller":
                z = controller.forward_np(actions[:, pos - 1], preds[:, pos - 1])
            else:
                z = z_all[:, pos - 1]
            out = forward_step(bundle, ctx_arr, z).data
            preds[:, pos] = out
            errors[:, pos - ctx] = np.mean(np.abs(out - reprs_true[:, pos]), axis=1)
    return RolloutResult(preds, errors, float(errors.mean()) if errors.size else 0.0)


def one_step_errors(bundle: ModelBundle, reprs_true: np.ndarray) -> np.ndarray:
    """Teacher-forced one-step errors for every transition, (B, T-1)."""
    b, t, r = reprs_true.shape
    with no_grad():
        s_t, s_tp1 = transition_pairs(reprs_true)
        lat = idm_infer(bundle, s_t, s_tp1)
        ctx = build_contexts(reprs_true, bundle.window)
        preds = forward_step(bundle, ctx, lat.z).data
    return np.mean(np.abs(preds - s_tp1), axis=1).reshape(b, t - 1)
