"""Checkpoint serialization for model bundles.

A checkpoint captures everything needed to resume training bit-exactly or
to evaluate later: parameter tensors, optimizer moments, the frozen encoder
arrays, codebook usage counters, the step counter, and every config as JSON
metadata.  No serialized RNG state is needed because all randomness is keyed
by the absolute step number.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import __version__
from .containers import MAGIC_CHECKPOINT, digest_of, read_container, write_container
from .controller import Controller, ControllerCfg
from .encoder import EncoderCfg, FrozenEncoder
from .model import ModelBundle
from .regularizers import RegularizerCfg
from .train import TrainCfg


def bundle_blob(bundle: ModelBundle) -> dict:
    """The bundle-identifying part of the config (no training schedule)."""
    return {
        "encoder": bundle.encoder.cfg.to_dict(),
        "grid": bundle.encoder.grid,
        "regularizer": bundle.reg.to_dict(),
        "latent_dim": bundle.latent_dim,
        "hidden_dim": bundle.hidden_dim,
        "window": bundle.window,
        "model_seed": bundle.seed,
    }


def bundle_config_digest(bundle: ModelBundle) -> str:
    return digest_of(bundle_blob(bundle))


def checkpoint_meta(
    bundle: ModelBundle,
    train_cfg: TrainCfg,
    controller: Controller | None = None,
    extra: dict | None = None,
) -> dict:
    cfg_blob = dict(bundle_blob(bundle))
    cfg_blob["train"] = train_cfg.to_dict()
    meta = {
        "kind": "checkpoint",
        "tool_version": __version__,
        "config": cfg_blob,
        "config_digest": digest_of(cfg_blob),
        "bundle_digest": digest_of(bundle_blob(bundle)),
        "step": bundle.step,
        "opt_step_count": bundle.opt.step_count if bundle.opt is not None else 0,
    }
    if controller is not None:
        meta["controller"] = {
            "cfg": controller.cfg.to_dict(),
            "action_dim": controller.action_dim,
            "step": controller.step,
            "opt_step_count": controller.opt.step_count if controller.opt is not None else 0,
        }
    if extra:
        meta.update(extra)
    return meta


def save_checkpoint(
    path: str,
    bundle: ModelBundle,
    train_cfg: TrainCfg,
    controller: Controller | None = None,
    extra_meta: dict | None = None,
) -> dict:
    arrays: dict[str, np.ndarray] = {}
    for name, p in bundle.parameters().items():
        arrays[f"p/{name}"] = p.data
    if bundle.opt is not None:
        for k, a in bundle.opt.state_arrays().items():
            arrays[f"opt/{k}"] = a
    arrays["enc/weight"] = bundle.encoder.weight
    arrays["enc/bias"] = bundle.encoder.bias
    if bundle.codebook is not None:
        arrays["cb/usage"] = bundle.codebook.usage
    if controller is not None:
        for name, p in controller.parameters().items():
            arrays[f"ctl/p/{name}"] = p.data
        if controller.opt is not None:
            for k, a in controller.opt.state_arrays().items():
                arrays[f"ctl/opt/{k}"] = a
    meta = checkpoint_meta(bundle, train_cfg, controller, extra_meta)
    write_container(path, MAGIC_CHECKPOINT, meta, arrays)
    return meta


class CheckpointData(NamedTuple):
    bundle: ModelBundle
    train_cfg: TrainCfg
    controller: Controller | None
    meta: dict


def load_checkpoint(path: str) -> CheckpointData:
    """Rebuild the bundle (and optimizer and controller, if saved)."""
    meta, arrays = read_container(path, MAGIC_CHECKPOINT)
    cfg = meta["config"]
    encoder = FrozenEncoder.from_arrays(
        EncoderCfg.from_dict(cfg["encoder"]), cfg["grid"], arrays["enc/weight"], arrays["enc/bias"]
    )
    reg = RegularizerCfg.from_dict(cfg["regularizer"])
    bundle = ModelBundle(
        encoder,
        reg,
        latent_dim=cfg["latent_dim"],
        hidden_dim=cfg["hidden_dim"],
        window=cfg["window"],
        seed=cfg["model_seed"],
    )
    for name, p in bundle.parameters().items():
        saved = arrays[f"p/{name}"]
        if saved.shape != p.data.shape:
            raise ValueError(f"shape mismatch for {name}: {saved.shape} vs {p.data.shape}")
        p.data = np.array(saved, dtype=np.float64)
    if bundle.codebook is not None:
        bundle.codebook.usage = np.array(arrays["cb/usage"], dtype=np.int64)
    bundle.step = int(meta["step"])
    train_cfg = TrainCfg.from_dict(cfg["train"])
    if any(k.startswith("opt/") for k in arrays):
        opt = bundle.ensure_optimizer(
            train_cfg.lr,
            (train_cfg.beta1, train_cfg.beta2),
            train_cfg.eps,
            train_cfg.weight_decay,
        )
        opt.load_state_arrays(
            {k[len("opt/") :]: a for k, a in arrays.items() if k.startswith("opt/")},
            meta["opt_step_count"],
        )
    controller = None
    if "controller" in meta:
        ctl_meta = meta["controller"]
        controller = Controller(
            ControllerCfg.from_dict(ctl_meta["cfg"]),
            ctl_meta["action_dim"],
            bundle.repr_dim,
            bundle.latent_dim,
        )
        for name, p in controller.parameters().items():
            p.data = np.array(arrays[f"ctl/p/{name}"], dtype=np.float64)
        controller.step = int(ctl_meta["step"])
        if any(k.startswith("ctl/opt/") for k in arrays):
            controller.ensure_optimizer().load_state_arrays(
                {k[len("ctl/opt/") :]: a for k, a in arrays.items() if k.startswith("ctl/opt/")},
                ctl_meta["opt_step_count"],
            )
    return CheckpointData(bundle, train_cfg, controller, meta)
