"""Goal-conditioned planning through the world model with the
cross-entropy method, plus displacement and trajectory metrics.

The planner searches over bounded action sequences.  Each candidate is
scored by unrolling the forward model from the current context, feeding it
controller-produced latents computed from the model's own predicted states,
and measuring the final state's L2 distance to the goal representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import Controller
from .model import ModelBundle, forward_step
from .rng import Rng
from .tensor import no_grad

STD_FLOOR = 0.01  # keeps the sampling distribution from collapsing early


@dataclass(frozen=True)
class CemCfg:
    n_samples: int = 300
    n_elite: int = 10
    n_iters: int = 15
    horizon: int = 3
    action_low: float = -2.0
    action_high: float = 2.0
    straight_line: bool = False  # one action repeated horizon times

    def __post_init__(self):
        if not 1 <= self.n_elite <= self.n_samples:
            raise ValueError("need 1 <= n_elite <= n_samples")
        if self.n_iters < 1 or self.horizon < 0:
            raise ValueError("n_iters must be >= 1 and horizon >= 0")
        if self.action_low >= self.action_high:
            raise ValueError("empty action box")

    def to_dict(self) -> dict:
        import dataclasses

        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CemCfg":
        return cls(**d)


PRESETS = {
    "manip": CemCfg(n_samples=300, n_elite=10, n_iters=15, horizon=3),
    "nav": CemCfg(n_samples=120, n_elite=10, n_iters=1, horizon=8, straight_line=True),
}


@dataclass
class PlanResult:
    actions: np.ndarray  # (H, A) best sequence found
    cost: float
    iteration_best: list[float]  # running best cost after each iteration
    iteration_elite_mean: list[float]  # mean elite cost per iteration
    metrics: dict = field(default_factory=dict)

    def first_action(self) -> np.ndarray:
        if self.actions.shape[0] == 0:
            raise ValueError("empty plan has no first action")
        return self.actions[0]


def unroll_with_controller(
    bundle: ModelBundle,
    controller: Controller,
    ctx_frames: np.ndarray,
    actions: np.ndarray,
) -> np.ndarray:
    """Final predicted representation after applying ``actions`` (N, H, A).

    ``ctx_frames`` is (window, R): the representation history ending at the
    current state.  Latents come from the controller applied to each action
    and the model's own current predicted state.
    """
    n, h, _ = actions.shape
    window, r = ctx_frames.shape
    if window != bundle.window:
        raise ValueError(f"need {bundle.window} context frames, got {window}")
    frames = [np.repeat(f[None, :], n, axis=0) for f in ctx_frames]
    with no_grad():
        for step in range(h):
            state = frames[-1]
            z = controller.forward_np(actions[:, step], state)
            ctx = np.concatenate(frames[-bundle.window :], axis=1)
            frames.append(forward_step(bundle, ctx, z).data)
    return frames[-1]


def plan_cost(
    bundle: ModelBundle,
    controller: Controller,
    ctx_frames: np.ndarray,
    goal: np.ndarray,
    actions: np.ndarray,
) -> np.ndarray:
    """L2 distance from each candidate's final predicted state to the goal."""
    if actions.shape[1] == 0:
        final = np.repeat(ctx_frames[-1][None, :], actions.shape[0], axis=0)
    else:
        final = unroll_with_controller(bundle, controller, ctx_frames, actions)
    return np.linalg.norm(final - goal[None, :], axis=1)


def cem_plan(
    cost_fn,
    action_dim: int,
    cfg: CemCfg,
    rng: Rng,
    label: str = "cem",
) -> PlanResult:
    """Iterative sample/elite/refit optimization of ``cost_fn``.

    ``cost_fn`` maps an (N, H, A) action array to (N,) costs.  The sampling
    distribution is a diagonal Gaussian per action entry, zero mean and unit
    std at the start.  The zero sequence rides along as one extra candidate
    in the first iteration, so the final cost never exceeds its cost.
    """
    h = cfg.horizon
    steps = 1 if cfg.straight_line else h
    mean = np.zeros((steps, action_dim))
    std = np.ones((steps, action_dim))
    best_cost = np.inf
    best_actions = np.zeros((h, action_dim))
    iteration_best: list[float] = []
    iteration_elite_mean: list[float] = []
    for it in range(cfg.n_iters):
        noise = rng.normal(f"{label}/{it}", (cfg.n_samples, steps, action_dim))
        cand = np.clip(mean + std * noise, cfg.action_low, cfg.action_high)
        if it == 0:
            cand = np.concatenate([cand, np.zeros((1, steps, action_dim))])
        full = np.repeat(cand, h, axis=1) if cfg.straight_line else cand
        costs = np.asarray(cost_fn(full))
        order = np.argsort(costs, kind="stable")
        elite = cand[order[: cfg.n_elite]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), STD_FLOOR)
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_actions = full[order[0]].copy()
        iteration_best.append(best_cost)
        iteration_elite_mean.append(float(costs[order[: cfg.n_elite]].mean()))
    return PlanResult(best_actions, best_cost, iteration_best, iteration_elite_mean)


def plan_to_goal(
    bundle: ModelBundle,
    controller: Controller,
    ctx_frames: np.ndarray,
    goal: np.ndarray,
    cfg: CemCfg,
    rng: Rng,
    label: str = "plan",
) -> PlanResult:
    def cost_fn(actions):
        return plan_cost(bundle, controller, ctx_frames, goal, actions)

    return cem_plan(cost_fn, controller.action_dim, cfg, rng, label)


def delta_xyz(planned: np.ndarray, gt: np.ndarray) -> float:
    """L1 distance between total planned and total true displacement."""
    planned = np.asarray(planned, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if planned.shape != gt.shape:
        raise ValueError(f"horizon mismatch: {planned.shape} vs {gt.shape}")
    return float(np.abs(planned.sum(axis=0) - gt.sum(axis=0)).sum())


def traj_errors(planned: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """(ATE, RPE) between the position chains the two action sequences trace
    from a shared start: mean L2 over positions, mean L2 over per-step deltas."""
    planned = np.asarray(planned, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if planned.shape != gt.shape:
        raise ValueError(f"horizon mismatch: {planned.shape} vs {gt.shape}")
    if planned.shape[0] == 0:
        return 0.0, 0.0
    pos_p = np.cumsum(planned, axis=0)
    pos_g = np.cumsum(gt, axis=0)
    ate = float(np.mean(np.linalg.norm(pos_p - pos_g, axis=1)))
    rpe = float(np.mean(np.linalg.norm(planned - gt, axis=1)))
    return ate, rpe


def exhaustive_costs(cost_fn, action_dim: int, horizon: int, grid=(-1.0, 0.0, 1.0)) -> np.ndarray:
    """Costs of every action sequence on the given per-entry grid, for the
    small-instance oracle check."""
    axes = [np.array(grid)] * (horizon * action_dim)
    mesh = np.meshgrid(*axes, indexing="ij")
    seqs = np.stack([m.ravel() for m in mesh], axis=1).reshape(-1, horizon, action_dim)
    return np.asarray(cost_fn(seqs))
