"""AdamW with decoupled weight decay, plus the warmup/cosine schedule."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    The decay term is applied directly to the parameter, outside the
    moment estimates, so ``weight_decay=0`` is plain Adam.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 6.25e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        """One update in place; ``lr`` overrides the stored rate for schedules."""
        rate = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= rate * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)

    # checkpoint plumbing

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k, a in self.m.items():
            out[f"m/{k}"] = a
        for k, a in self.v.items():
            out[f"v/{k}"] = a
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for k in self.m:
            self.m[k] = np.array(arrays[f"m/{k}"], dtype=np.float64)
            self.v[k] = np.array(arrays[f"v/{k}"], dtype=np.float64)
        self.step_count = int(step_count)


def warmup_cosine(step: int, total_steps: int, warmup_frac: float = 0.1) -> float:
    """Learning-rate scale: linear ramp over the warmup span, cosine decay after.

    ``step`` counts from 0; the scale for the k-th update uses step=k.
    """
    warmup = max(1, int(round(total_steps * warmup_frac)))
    if step < warmup:
        return (step + 1) / warmup
    span = max(1, total_steps - warmup)
    progress = min(1.0, (step - warmup) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))
