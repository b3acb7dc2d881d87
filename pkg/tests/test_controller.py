"""Controller: action-to-latent mapping, training, and rollout behaviour."""

import numpy as np
import pytest

from lamward.controller import (
    Controller,
    ControllerCfg,
    controller_targets,
    fit_controller,
    train_controller,
)
from lamward.encoder import EncoderCfg, FrozenEncoder
from lamward.model import ModelBundle, rollout
from lamward.regularizers import RegularizerCfg
from lamward.train import TrainCfg, train
from lamward.worldgen import WorldCfg, generate_dataset

_CACHE = {}


def trained_setup():
    """One modestly trained bundle plus controller targets, cached per module."""
    if "setup" not in _CACHE:
        wcfg = WorldCfg()
        eps = generate_dataset(wcfg, seed=55, count=96)
        enc = FrozenEncoder(EncoderCfg(repr_dim=32), wcfg.grid)
        reprs = enc.encode_dataset(eps)
        bundle = ModelBundle(
            enc, RegularizerCfg(kind="sparse", l1_weight=0.05), latent_dim=8, hidden_dim=48, seed=1
        )
        train(bundle, reprs, TrainCfg(steps=400, batch_size=16, seed=7))
        states, actions, targets = controller_targets(bundle, reprs, eps)
        _CACHE["setup"] = (wcfg, enc, eps, bundle, states, actions, targets)
    return _CACHE["setup"]


def synthetic_task(n=256, action_dim=2, latent_dim=3):
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1, 1, (n, action_dim))
    mix = np.array([[0.5, -0.3, 0.2], [0.1, 0.4, -0.6]])
    return actions, actions @ mix, np.zeros((n, 4))


def test_forward_shape_and_determinism():
    cfg = ControllerCfg(hidden_dim=16, seed=11)
    a = np.random.default_rng(1).normal(size=(5, 3))
    s = np.random.default_rng(2).normal(size=(5, 10))
    c1 = Controller(cfg, 3, 10, 6)
    c2 = Controller(cfg, 3, 10, 6)
    out1 = c1.forward_np(a, s)
    assert out1.shape == (5, 6)
    assert np.array_equal(out1, c2.forward_np(a, s))
    assert np.array_equal(out1, c1.forward(a, s).data)


def test_no_context_controller_ignores_state():
    cfg = ControllerCfg(hidden_dim=16, use_context=False, seed=3)
    c = Controller(cfg, 2, 10, 4)
    a = np.random.default_rng(4).normal(size=(7, 2))
    s = np.random.default_rng(5).normal(size=(7, 10))
    assert np.array_equal(c.forward_np(a, None), c.forward_np(a, s))


def test_bad_inputs_raise():
    ctx = Controller(ControllerCfg(hidden_dim=8, seed=0), 2, 6, 4)
    with pytest.raises(ValueError):
        ctx.forward(np.zeros((3, 5)), np.zeros((3, 6)))  # wrong action dim
    with pytest.raises(ValueError):
        ctx.forward(np.zeros((3, 2)), None)  # context controller needs states
    with pytest.raises(ValueError):
        train_controller(ctx, np.zeros((0, 6)), np.zeros((0, 2)), np.zeros((0, 4)))


def test_fits_linear_map():
    actions, targets, states = synthetic_task()
    cfg = ControllerCfg(use_context=False, steps=1500, seed=2, lr=5e-3, weight_decay=0.0)
    c = Controller(cfg, 2, 4, 3)
    reports = train_controller(c, states, actions, targets)
    assert len(reports) == cfg.steps
    assert set(reports[0]) == {"step", "mse", "lr"}
    pred = c.forward_np(actions, None)
    mse = float(np.mean(np.sum((pred - targets) ** 2, axis=1)))
    assert mse < 1e-4


def test_fits_constant_target():
    actions, _, states = synthetic_task()
    const = np.tile(np.array([0.7, -0.2, 0.1]), (actions.shape[0], 1))
    cfg = ControllerCfg(use_context=False, steps=1200, seed=3, lr=5e-3, weight_decay=0.0)
    c = Controller(cfg, 2, 4, 3)
    train_controller(c, states, actions, const)
    probe = np.random.default_rng(9).uniform(-1, 1, (32, 2))
    assert np.abs(c.forward_np(probe, None) - const[0]).max() < 0.05


def test_fit_controller_leaves_bundle_untouched():
    _, _, eps, bundle, *_ = trained_setup()
    before = {k: p.data.copy() for k, p in bundle.parameters().items()}
    ctl, reports = fit_controller(bundle, eps[:24], ControllerCfg(steps=30, seed=6))
    after = bundle.parameters()
    assert set(before) == set(after)
    for k in before:
        assert np.array_equal(before[k], after[k].data)
    assert set(ctl.parameters()) == {
        "ctl.w0", "ctl.b0", "ctl.w1", "ctl.b1", "ctl.out_w", "ctl.out_b"
    }
    assert ctl.step == 30 and len(reports) == 30


def test_context_beats_action_only():
    # IDM latents depend on the state pair, so the action alone cannot
    # explain them; the context input must cut the fitting error.
    _, _, _, bundle, states, actions, targets = trained_setup()
    mse = {}
    for use_ctx in (True, False):
        cfg = ControllerCfg(use_context=use_ctx, steps=1000, seed=4)
        c = Controller(cfg, actions.shape[1], bundle.repr_dim, bundle.latent_dim)
        train_controller(c, states, actions, targets)
        pred = c.forward_np(actions, states)
        mse[use_ctx] = float(np.mean(np.sum((pred - targets) ** 2, axis=1)))
        _CACHE[("ctl", use_ctx)] = c
    assert mse[True] < 0.8 * mse[False]


def test_rollout_error_ordering():
    # IDM peeks at the true future, so it lower-bounds the trained
    # controller; the untrained controller must not beat the trained one.
    wcfg, enc, _, bundle, states, actions, targets = trained_setup()
    if ("ctl", True) not in _CACHE:
        test_context_beats_action_only()
    trained = _CACHE[("ctl", True)]
    untrained = Controller(
        ControllerCfg(use_context=True, steps=1000, seed=4),
        actions.shape[1], bundle.repr_dim, bundle.latent_dim,
    )
    eval_eps = generate_dataset(wcfg, seed=66, count=32)
    ev = enc.encode_dataset(eval_eps)
    ev_actions = np.stack([ep.actions for ep in eval_eps], axis=0)
    e_un = rollout(bundle, ev, ctx=2, source="controller", controller=untrained, actions=ev_actions).mean_error
    e_tr = rollout(bundle, ev, ctx=2, source="controller", controller=trained, actions=ev_actions).mean_error
    e_idm = rollout(bundle, ev, ctx=2, source="idm").mean_error
    assert e_idm <= e_tr < e_un
    with pytest.raises(ValueError):
        rollout(bundle, ev, ctx=2, source="controller", controller=None, actions=ev_actions)
    with pytest.raises(ValueError):
        rollout(bundle, ev, ctx=2, source="controller", controller=trained, actions=None)


def test_cfg_round_trip():
    cfg = ControllerCfg(hidden_dim=32, use_context=False, steps=77, lr=2e-3, seed=5)
    assert ControllerCfg.from_dict(cfg.to_dict()) == cfg
