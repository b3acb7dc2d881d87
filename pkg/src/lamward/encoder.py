"""Frozen random-feature encoder from frames to representation vectors.

The encoder is a seeded affine map followed by tanh and is never trained;
its weights are plain numpy arrays, so the autodiff tape cannot reach them
by construction.  Representations are what every downstream model consumes,
and prediction error is always measured in this space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .worldgen import Episode


@dataclass(frozen=True)
class EncoderCfg:
    repr_dim: int = 64
    seed: int = 7
    weight_scale: float = 0.35  # std of W entries, tuned for non-saturating tanh

    def to_dict(self) -> dict:
        return {"repr_dim": self.repr_dim, "seed": self.seed, "weight_scale": self.weight_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderCfg":
        return cls(**d)


class FrozenEncoder:
    """s = tanh(W @ flatten(frame) + b) with seeded, immutable (W, b)."""

    def __init__(self, cfg: EncoderCfg, grid: int):
        self.cfg = cfg
        self.grid = grid
        n_pixels = grid * grid
        rng = Rng(cfg.seed)
        # frames are sparse (a few bright pixels on black), so weights are not
        # fan-in normalized; the scale targets pre-activation std near 0.8
        self.weight = rng.normal("encoder/weight", (cfg.repr_dim, n_pixels)) * cfg.weight_scale
        self.bias = rng.normal("encoder/bias", (cfg.repr_dim,)) * 0.3
        self.weight.setflags(write=False)
        self.bias.setflags(write=False)

    @classmethod
    def from_arrays(cls, cfg: EncoderCfg, grid: int, weight: np.ndarray, bias: np.ndarray) -> "FrozenEncoder":
        enc = cls.__new__(cls)
        enc.cfg = cfg
        enc.grid = grid
        enc.weight = np.array(weight, dtype=np.float64)
        enc.bias = np.array(bias, dtype=np.float64)
        enc.weight.setflags(write=False)
        enc.bias.setflags(write=False)
        return enc

    def encode(self, frames: np.ndarray) -> np.ndarray:
        """Encode frames of shape (..., G, G) to (..., repr_dim).

        Uses a fixed-order einsum rather than BLAS so a frame encodes to
        bitwise-identical values no matter how it is batched.
        """
        lead = frames.shape[:-2]
        flat = frames.reshape(-1, self.grid * self.grid)
        pre = np.einsum("np,rp->nr", flat, self.weight, optimize=False) + self.bias
        return np.tanh(pre).reshape(*lead, self.cfg.repr_dim)

    def encode_episode(self, ep: Episode) -> np.ndarray:
        return self.encode(ep.frames)

    def encode_dataset(self, episodes: list[Episode]) -> np.ndarray:
        return self.encode(np.stack([e.frames for e in episodes]))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.weight.tobytes())
        h.update(self.bias.tobytes())
        return h.hexdigest()
