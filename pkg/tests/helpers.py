"""Shared test oracles: finite differences and op-sweep gradient checks."""

from __future__ import annotations

import numpy as np

from lamward.rng import Rng
from lamward.tensor import (
    Tensor,
    absolute,
    concat,
    exp,
    grad,
    log,
    matmul,
    relu,
    sqrt,
    square,
    take,
    tanh,
    tensor_mean,
    tensor_sum,
    transpose,
)

FD_REL_TOL = 1e-4


def fd_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / denom)


def check_op_grad(build, x: np.ndarray, h: float = 1e-6, tol: float = FD_REL_TOL) -> float:
    """Compare tape gradient of ``build(Tensor) -> scalar Tensor`` against FD."""
    p = Tensor(x.copy(), requires_grad=True)
    loss = build(p)
    g_tape = grad(loss, {"x": p})["x"]

    def f(arr):
        return build(Tensor(arr)).item()

    g_fd = fd_grad(f, x.copy(), h=h)
    err = rel_err(g_tape, g_fd)
    assert err <= tol, f"gradient mismatch: rel err {err:.3e} > {tol}"
    return err


def _weighted(op, weights):
    """Scalarize an op output with fixed random weights so FD probes the full Jacobian."""

    def build(x):
        return tensor_sum(op(x) * Tensor(weights))

    return build


def op_gradient_sweep(seed: int = 0, points: int = 10) -> dict[str, float]:
    """FD-check every differentiable op at ``points`` random inputs each.

    Inputs stay away from kinks (abs, relu) and singularities (log, sqrt,
    division) so central differences are valid there.  Returns the worst
    relative error seen per op.
    """
    rng = Rng(seed)
    worst: dict[str, float] = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for k in range(points):
        x = rng.normal(f"x/{k}", (3, 4))
        pos = rng.uniform(f"pos/{k}", (3, 4)) * 2.0 + 0.5  # in [0.5, 2.5]
        away = x + 0.25 * np.sign(x) + (x == 0.0) * 0.25  # |entries| >= 0.25
        w = rng.normal(f"w/{k}", (3, 4))
        wvec = rng.normal(f"wv/{k}", (4, 2))

        note("add", check_op_grad(_weighted(lambda t: t + Tensor(w), w), x))
        note("sub", check_op_grad(_weighted(lambda t: Tensor(w) - t, w), x))
        note("mul", check_op_grad(_weighted(lambda t: t * Tensor(w), w), x))
        note("div", check_op_grad(_weighted(lambda t: t / Tensor(pos), w), x))
        note("div_denom", check_op_grad(_weighted(lambda t: Tensor(w) / t, w), pos.copy()))
        note("matmul", check_op_grad(lambda t: tensor_sum(matmul(t, Tensor(wvec))), x))
        note("transpose", check_op_grad(_weighted(lambda t: transpose(transpose(t)), w), x))
        note("tanh", check_op_grad(_weighted(tanh, w), x))
        note("exp", check_op_grad(_weighted(exp, w), x))
        note("log", check_op_grad(_weighted(log, w), pos.copy()))
        note("sqrt", check_op_grad(_weighted(sqrt, w), pos.copy()))
        note("square", check_op_grad(_weighted(square, w), x))
        note("absolute", check_op_grad(_weighted(absolute, w), away.copy()))
        note("relu", check_op_grad(_weighted(relu, w), away.copy()))
        note("sum_all", check_op_grad(lambda t: tensor_sum(t), x))
        note("sum_axis0", check_op_grad(lambda t: tensor_sum(tensor_sum(t, axis=0) * Tensor(w[0])), x))
        note("mean_all", check_op_grad(lambda t: tensor_mean(t), x))
        note("mean_axis1", check_op_grad(lambda t: tensor_sum(tensor_mean(t, axis=1) * Tensor(w[:, 0])), x))
        note("concat", check_op_grad(lambda t: tensor_sum(concat([t, t * Tensor(w)], axis=1)), x))
        note("take_rows", check_op_grad(lambda t: tensor_sum(take(t, np.array([0, 0, 2])) * Tensor(w[:3])), x))
        note("take_slice", check_op_grad(lambda t: tensor_sum(t[:, 1:3] * Tensor(w[:, 1:3])), x))
        note("bias_broadcast", check_op_grad(lambda t: tensor_sum(tanh(t + Tensor(w[0])) * Tensor(w)), x))
    return worst
