"""Maps known actions (plus the current representation) to latent actions.

The controller makes the latent space controllable from the outside: it is
trained, with the bundle frozen, to reproduce the latents the IDM infers in
evaluation mode.  A rollout driven by the controller only ever sees the
model's own predicted states, so its error upper-bounds the IDM rollout,
which gets to peek at the true future.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelBundle, idm_infer, transition_pairs
from .optim import AdamW, warmup_cosine
from .rng import Rng
from .tensor import Tensor, concat, grad, matmul, no_grad, square, tanh, tensor_mean, tensor_sum
from .worldgen import Episode


@dataclass(frozen=True)
class ControllerCfg:
    hidden_dim: int = 64
    use_context: bool = True  # False: latent from the action alone (ablation)
    steps: int = 1500
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.04
    warmup_frac: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerCfg":
        return cls(**d)


class Controller:
    """Two tanh layers from concat(action, state) — or the action alone —
    to a latent-dimension output."""

    def __init__(self, cfg: ControllerCfg, action_dim: int, repr_dim: int, latent_dim: int):
        self.cfg = cfg
        self.action_dim = action_dim
        self.repr_dim = repr_dim
        self.latent_dim = latent_dim
        self.step = 0
        self.opt: AdamW | None = None
        in_dim = action_dim + (repr_dim if cfg.use_context else 0)
        rng = Rng(cfg.seed)
        h = cfg.hidden_dim

        def lin(label, fan_in, fan_out):
            return Tensor(rng.normal(label, (fan_in, fan_out)) / math.sqrt(fan_in), requires_grad=True)

        self.params = {
            "ctl.w0": lin("ctl/w0", in_dim, h),
            "ctl.b0": Tensor(np.zeros(h), requires_grad=True),
            "ctl.w1": lin("ctl/w1", h, h),
            "ctl.b1": Tensor(np.zeros(h), requires_grad=True),
            "ctl.out_w": lin("ctl/out_w", h, latent_dim),
            "ctl.out_b": Tensor(np.zeros(latent_dim), requires_grad=True),
        }

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def forward(self, actions: np.ndarray | Tensor, states: np.ndarray | Tensor | None) -> Tensor:
        a = actions if isinstance(actions, Tensor) else Tensor(actions)
        if a.shape[-1] != self.action_dim:
            raise ValueError(f"action dim {a.shape[-1]} != {self.action_dim}")
        if self.cfg.use_context:
            if states is None:
                raise ValueError("context controller needs states")
            s = states if isinstance(states, Tensor) else Tensor(states)
            x = concat([a, s], axis=1)
        else:
            x = a
        p = self.params
        h = tanh(matmul(x, p["ctl.w0"]) + p["ctl.b0"])
        h = tanh(matmul(h, p["ctl.w1"]) + p["ctl.b1"])
        return matmul(h, p["ctl.out_w"]) + p["ctl.out_b"]

    def forward_np(self, actions: np.ndarray, states: np.ndarray | None) -> np.ndarray:
        with no_grad():
            return self.forward(actions, states).data

    def ensure_optimizer(self) -> AdamW:
        if self.opt is None:
            self.opt = AdamW(
                self.parameters(),
                lr=self.cfg.lr,
                weight_decay=self.cfg.weight_decay,
            )
        return self.opt


def controller_targets(
    bundle: ModelBundle, reprs: np.ndarray, episodes: list[Episode]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(state, action, latent) training tuples from eval-mode IDM latents.

    The latent for transition t is paired with the representation the
    transition starts from and the ground-truth action taken there.
    """
    if len(episodes) != reprs.shape[0]:
        raise ValueError("episode count does not match representation batch")
    s_t, s_tp1 = transition_pairs(reprs)
    with no_grad():
        z = idm_infer(bundle, s_t, s_tp1).z.data
    actions = np.concatenate([ep.actions for ep in episodes], axis=0)
    if actions.shape[0] != s_t.shape[0]:
        raise ValueError("actions do not align with transitions")
    return s_t, actions.astype(np.float64), z


def controller_loss(controller: Controller, states, actions, targets) -> Tensor:
    """Mean squared latent error: mean over samples of ||z_hat - z||_2^2."""
    z_hat = controller.forward(actions, states)
    diff = z_hat - (targets if isinstance(targets, Tensor) else Tensor(targets))
    return tensor_mean(tensor_sum(square(diff), axis=1))


def train_controller(
    controller: Controller,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    log_every: int = 0,
) -> list[dict]:
    """Fit the controller to frozen-IDM latents; bundle parameters are
    untouched because none of them ever enter this graph."""
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty controller dataset")
    cfg = controller.cfg
    rng = Rng(cfg.seed)
    opt = controller.ensure_optimizer()
    reports = []
    while controller.step < cfg.steps:
        step = controller.step
        idx = rng.integers(f"ctl-batch/{step}", (min(cfg.batch_size, n),), 0, n)
        loss = controller_loss(controller, states[idx], actions[idx], targets[idx])
        params = controller.parameters()
        grads = grad(loss, params)
        lr = cfg.lr * warmup_cosine(step, cfg.steps, cfg.warmup_frac)
        opt.step(params, grads, lr=lr)
        controller.step = step + 1
        reports.append({"step": step, "mse": float(loss.data), "lr": lr})
        if log_every and (step + 1) % log_every == 0:
            print(f"controller step {step + 1}/{cfg.steps} mse {loss.data:.6f}")
    return reports


def fit_controller(
    bundle: ModelBundle, episodes: list[Episode], cfg: ControllerCfg, log_every: int = 0
) -> tuple[Controller, list[dict]]:
    """End-to-end: build targets from the bundle, construct, and train."""
    reprs = bundle.encoder.encode_dataset(episodes)
    states, actions, targets = controller_targets(bundle, reprs, episodes)
    controller = Controller(cfg, actions.shape[1], bundle.repr_dim, bundle.latent_dim)
    reports = train_controller(controller, states, actions, targets, log_every=log_every)
    return controller, reports
