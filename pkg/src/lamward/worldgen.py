"""Procedural sprite videos with known ground-truth actions.

Episodes are short grayscale clips of square sprites on a grid.  Depending on
``action_mode`` the per-step action moves the agent sprite, pans the camera
over a fixed random texture, or both.  Stored actions are *effective*: what
the clamped dynamics actually applied, so every labeled transition is exactly
reproducible and brute-force recoverable from the rendered frames.

Stochasticity is limited to one-frame distractor flickers of background
pixels; they carry no information about the past or future by construction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .containers import MAGIC_EPISODES, atomic_write_text, read_container, write_container
from .rng import Rng

ACTION_MODES = ("agent-displacement", "camera-pan", "both")


@dataclass(frozen=True)
class WorldCfg:
    grid: int = 16
    n_frames: int = 16
    n_sprites: int = 1
    action_mode: str = "agent-displacement"
    action_range: int = 2
    distractor_rate: float = 0.0
    sprite_min: int = 3
    sprite_max: int = 5
    momentum: float = 0.4
    camera_margin: int = 8

    def __post_init__(self):
        if self.action_mode not in ACTION_MODES:
            raise ValueError(f"unknown action_mode {self.action_mode!r}")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ValueError("distractor_rate must lie in [0, 1]")
        if self.sprite_max > self.grid or self.sprite_min < 1 or self.sprite_min > self.sprite_max:
            raise ValueError("sprite size range must fit the grid")
        if self.n_frames < 2:
            raise ValueError("episodes need at least 2 frames")
        if self.action_range < 0 or self.n_sprites < 1:
            raise ValueError("action_range and n_sprites must be positive")

    @property
    def action_dim(self) -> int:
        return 4 if self.action_mode == "both" else 2

    @property
    def has_agent(self) -> bool:
        return self.action_mode in ("agent-displacement", "both")

    @property
    def has_camera(self) -> bool:
        return self.action_mode in ("camera-pan", "both")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WorldCfg":
        return cls(**d)


@dataclass
class Episode:
    """Frames (T,G,G) in [0,1], effective actions (T-1,A), and their validity."""

    frames: np.ndarray
    actions: np.ndarray
    action_valid: np.ndarray
    seed: int
    cfg: WorldCfg


@dataclass
class WorldState:
    positions: np.ndarray  # (n_sprites, 2) int64, world coordinates (row, col)
    sizes: np.ndarray  # (n_sprites,) int64
    intensities: np.ndarray  # (n_sprites,) float64 in [0.4, 1.0]
    camera: np.ndarray  # (2,) int64 offset, zero when there is no camera
    texture: np.ndarray | None  # camera modes only

    def copy(self) -> "WorldState":
        return WorldState(
            self.positions.copy(),
            self.sizes.copy(),
            self.intensities.copy(),
            self.camera.copy(),
            None if self.texture is None else self.texture,
        )


def init_state(cfg: WorldCfg, rng: Rng) -> WorldState:
    n = cfg.n_sprites
    sizes = rng.integers("init/size", (n,), cfg.sprite_min, cfg.sprite_max + 1)
    base = cfg.camera_margin if cfg.has_camera else 0
    spans = cfg.grid - sizes  # inclusive upper offset within the view
    u = rng.uniform("init/pos", (n, 2))
    positions = base + np.floor(u * (spans[:, None] + 1)).astype(np.int64)
    intensities = 0.4 + 0.6 * rng.uniform("init/intensity", (n,))
    texture = None
    if cfg.has_camera:
        side = cfg.grid + 2 * cfg.camera_margin
        texture = 0.25 * rng.uniform("init/texture", (side, side))
    return WorldState(positions, sizes, intensities, np.zeros(2, dtype=np.int64), texture)


def _view_origin(cfg: WorldCfg, state: WorldState) -> np.ndarray:
    if cfg.has_camera:
        return state.camera + cfg.camera_margin
    return np.zeros(2, dtype=np.int64)


def render(state: WorldState, cfg: WorldCfg) -> np.ndarray:
    """Deterministic noiseless render of a state."""
    g = cfg.grid
    origin = _view_origin(cfg, state)
    if state.texture is not None:
        frame = state.texture[origin[0] : origin[0] + g, origin[1] : origin[1] + g].copy()
    else:
        frame = np.zeros((g, g), dtype=np.float64)
    for pos, size, val in zip(state.positions, state.sizes, state.intensities):
        r, c = pos - origin
        r0, r1 = max(r, 0), min(r + size, g)
        c0, c1 = max(c, 0), min(c + size, g)
        if r1 > r0 and c1 > c0:
            region = frame[r0:r1, c0:c1]
            np.maximum(region, val, out=region)
    return frame


def sprite_mask(state: WorldState, cfg: WorldCfg) -> np.ndarray:
    g = cfg.grid
    origin = _view_origin(cfg, state)
    mask = np.zeros((g, g), dtype=bool)
    for pos, size in zip(state.positions, state.sizes):
        r, c = pos - origin
        r0, r1 = max(r, 0), min(r + size, g)
        c0, c1 = max(c, 0), min(c + size, g)
        if r1 > r0 and c1 > c0:
            mask[r0:r1, c0:c1] = True
    return mask


def _flicker(frame: np.ndarray, state: WorldState, cfg: WorldCfg, rng: Rng, t: int) -> np.ndarray:
    """One-frame distractor noise on background pixels; memoryless by design."""
    if cfg.distractor_rate <= 0.0:
        return frame
    g = cfg.grid
    sel = rng.uniform(f"flicker/sel/{t}", (g, g)) < cfg.distractor_rate
    sel &= ~sprite_mask(state, cfg)
    if np.any(sel):
        vals = rng.uniform(f"flicker/val/{t}", (g, g))
        frame = frame.copy()
        frame[sel] = vals[sel]
    return frame


def step_state(state: WorldState, desired: np.ndarray, cfg: WorldCfg) -> tuple[WorldState, np.ndarray]:
    """Advance one step; returns the new state and the effective action.

    Camera moves first, then the agent sprite clamps to both the world bounds
    and the current view, so labeled agent displacements always stay visible.
    """
    desired = np.asarray(desired, dtype=np.int64)
    if desired.shape != (cfg.action_dim,):
        raise ValueError(f"action shape {desired.shape} != ({cfg.action_dim},)")
    out = state.copy()
    parts = []
    idx = 0
    if cfg.has_agent:
        agent_d = desired[idx : idx + 2]
        idx += 2
    if cfg.has_camera:
        cam_d = desired[idx : idx + 2]
        m = cfg.camera_margin
        new_cam = np.clip(state.camera + cam_d, -m, m)
        eff_cam = new_cam - state.camera
        out.camera = new_cam
    if cfg.has_agent:
        size = out.sizes[0]
        origin = _view_origin(cfg, out)
        lo = origin
        hi = origin + cfg.grid - size
        new_pos = np.clip(out.positions[0] + agent_d, lo, hi)
        parts.append(new_pos - state.positions[0])
        out.positions = out.positions.copy()
        out.positions[0] = new_pos
    if cfg.has_camera:
        parts.append(eff_cam)
    return out, np.concatenate(parts).astype(np.float64)


def _policy_step(vel: np.ndarray, cfg: WorldCfg, rng: Rng, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Momentum random walk over integer displacements."""
    r = cfg.action_range
    noise = rng.uniform(f"policy/{t}", (cfg.action_dim,)) * 2.0 * r - r
    vel = cfg.momentum * vel + (1.0 - cfg.momentum) * noise
    desired = np.clip(np.rint(vel), -r, r).astype(np.int64)
    return vel, desired


def _generate(cfg: WorldCfg, seed: int, actions: np.ndarray | None = None):
    """Shared episode machinery; with ``actions`` given, replays them instead
    of the policy (clamping again, so returned actions are the effective ones)."""
    rng = Rng(seed)
    state = init_state(cfg, rng)
    t_total = cfg.n_frames
    frames = np.empty((t_total, cfg.grid, cfg.grid), dtype=np.float64)
    states = [state]
    frames[0] = _flicker(render(state, cfg), state, cfg, rng, 0)
    eff = np.zeros((t_total - 1, cfg.action_dim), dtype=np.float64)
    vel = np.zeros(cfg.action_dim, dtype=np.float64)
    for t in range(t_total - 1):
        if actions is None:
            vel, desired = _policy_step(vel, cfg, rng, t)
        else:
            desired = np.asarray(np.rint(actions[t]), dtype=np.int64)
        state, eff[t] = step_state(state, desired, cfg)
        states.append(state)
        frames[t + 1] = _flicker(render(state, cfg), state, cfg, rng, t + 1)
    return frames, eff, states


def make_episode(cfg: WorldCfg, seed: int) -> Episode:
    frames, actions, _ = _generate(cfg, seed)
    valid = np.ones(cfg.n_frames - 1, dtype=bool)
    return Episode(frames, actions, valid, seed, cfg)


def replay(cfg: WorldCfg, seed: int, actions: np.ndarray) -> Episode:
    """Re-run the dynamics from the seed's initial state under given actions.

    Replaying an episode's own actions reproduces it exactly; replaying
    another episode's actions is the ground-truth transfer oracle.
    """
    actions = np.asarray(actions, dtype=np.float64)
    n_steps = actions.shape[0]
    if actions.shape != (n_steps, cfg.action_dim):
        raise ValueError("actions must be (steps, action_dim)")
    cfg_t = dataclasses.replace(cfg, n_frames=n_steps + 1)
    frames, eff, _ = _generate(cfg_t, seed, actions=actions)
    return Episode(frames, eff, np.ones(n_steps, dtype=bool), seed, cfg_t)


def simulate_states(cfg: WorldCfg, seed: int) -> list[WorldState]:
    _, _, states = _generate(cfg, seed)
    return states


def generate_dataset(cfg: WorldCfg, seed: int, count: int) -> list[Episode]:
    root = Rng(seed)
    return [make_episode(cfg, root.derive(f"ep/{i}").seed) for i in range(count)]


# -- ground-truth action recovery -----------------------------------------


def _candidate_actions(cfg: WorldCfg) -> np.ndarray:
    r = cfg.action_range
    axis = np.arange(-r, r + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * cfg.action_dim), indexing="ij")
    cands = np.stack([g.ravel() for g in grids], axis=1)
    order = np.lexsort(tuple(cands[:, i] for i in reversed(range(cands.shape[1]))))
    cands = cands[order]
    stable = np.argsort(np.abs(cands).sum(axis=1), kind="stable")
    return cands[stable]  # smallest L1 norm first, then lexicographic


def episode_states(ep: Episode) -> list[WorldState]:
    """States along an episode, rebuilt by stepping its stored effective
    actions from the seeded initial state (clamping is idempotent on them)."""
    state = init_state(ep.cfg, Rng(ep.seed))
    states = [state]
    for t in range(ep.actions.shape[0]):
        state, _ = step_state(state, np.rint(ep.actions[t]).astype(np.int64), ep.cfg)
        states.append(state)
    return states


def recover_action(ep: Episode, t: int) -> np.ndarray:
    """Brute-force the action grid against the rendered next frame.

    Only meaningful on noiseless episodes (distractor_rate 0); ties from
    border clamping resolve to the smallest-magnitude candidate, which is
    exactly the stored effective action.
    """
    states = episode_states(ep)
    target = ep.frames[t + 1]
    for cand in _candidate_actions(ep.cfg):
        nxt, eff = step_state(states[t], cand, ep.cfg)
        if np.array_equal(render(nxt, ep.cfg), target):
            return eff
    raise ValueError(f"no action on the grid reproduces frame {t + 1}")


# -- scene cuts and cycle pairs -------------------------------------------


def stitch_scene_cut(a: Episode, b: Episode, k: int) -> Episode:
    """Frames 0..k-1 from ``a``, k.. from ``b``; the cut transition k-1 -> k
    has no ground-truth action, so validity ends just before it."""
    if a.cfg != b.cfg:
        raise ValueError("stitch requires episodes with identical configuration")
    t_total = a.cfg.n_frames
    if not 0 < k < t_total:
        raise ValueError(f"cut index {k} outside (0, {t_total})")
    frames = np.concatenate([a.frames[:k], b.frames[k:]], axis=0)
    actions = np.concatenate([a.actions[: k - 1], b.actions[k - 1 :]], axis=0)
    valid = np.arange(t_total - 1) < (k - 1)
    return Episode(frames, actions, valid, a.seed, a.cfg)


def make_cycle_pair(cfg: WorldCfg, seed: int) -> tuple[Episode, Episode]:
    root = Rng(seed)
    ep_a = make_episode(cfg, root.derive("cycle/a").seed)
    ep_b = make_episode(cfg, root.derive("cycle/b").seed)
    return ep_a, ep_b


# -- serialization ---------------------------------------------------------


def _dataset_arrays(episodes: list[Episode]) -> dict[str, np.ndarray]:
    return {
        "frames": np.stack([e.frames for e in episodes]),
        "actions": np.stack([e.actions for e in episodes]),
        "action_valid": np.stack([e.action_valid for e in episodes]).astype(np.uint8),
        "seeds": np.array([e.seed for e in episodes], dtype=np.int64),
    }


def save_episodes(path: str, episodes: list[Episode], extra_meta: dict | None = None) -> None:
    if not episodes:
        raise ValueError("refusing to write an empty dataset")
    cfg = episodes[0].cfg
    if any(e.cfg != cfg for e in episodes):
        raise ValueError("all episodes in a container must share one cfg")
    meta = {"cfg": cfg.to_dict(), "count": len(episodes)}
    meta.update(extra_meta or {})
    write_container(path, MAGIC_EPISODES, meta, _dataset_arrays(episodes))


def load_episodes(path: str) -> tuple[list[Episode], dict]:
    meta, arrays = read_container(path, MAGIC_EPISODES)
    cfg = WorldCfg.from_dict(meta["cfg"])
    episodes = []
    for i in range(meta["count"]):
        episodes.append(
            Episode(
                arrays["frames"][i],
                arrays["actions"][i],
                arrays["action_valid"][i].astype(bool),
                int(arrays["seeds"][i]),
                cfg,
            )
        )
    return episodes, meta


def dump_episodes_text(path: str, episodes: list[Episode], extra_meta: dict | None = None) -> None:
    """Lossless JSON dump: float64 round-trips through repr exactly."""
    import json

    cfg = episodes[0].cfg
    doc = {
        "cfg": cfg.to_dict(),
        "count": len(episodes),
        "episodes": [
            {
                "seed": e.seed,
                "frames": e.frames.tolist(),
                "actions": e.actions.tolist(),
                "action_valid": e.action_valid.astype(int).tolist(),
            }
            for e in episodes
        ],
    }
    doc.update(extra_meta or {})
    atomic_write_text(path, json.dumps(doc, sort_keys=True))


def load_episodes_text(path: str) -> tuple[list[Episode], dict]:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = WorldCfg.from_dict(doc["cfg"])
    episodes = [
        Episode(
            np.array(rec["frames"], dtype=np.float64),
            np.array(rec["actions"], dtype=np.float64),
            np.array(rec["action_valid"], dtype=bool),
            int(rec["seed"]),
            cfg,
        )
        for rec in doc["episodes"]
    ]
    meta = {k: v for k, v in doc.items() if k != "episodes"}
    return episodes, meta


def episodes_equal(a: Episode, b: Episode) -> bool:
    return (
        a.cfg == b.cfg
        and a.seed == b.seed
        and np.array_equal(a.frames, b.frames)
        and np.array_equal(a.actions, b.actions)
    )
