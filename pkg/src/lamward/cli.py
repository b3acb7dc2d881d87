"""Command-line pipeline: generate data, train, evaluate, plan, sample.

Every command is a pure function of its config and seeds: rerunning with the
same inputs produces byte-identical outputs, and every artifact embeds the
tool version, the run-config digest, and the seed that made it.  All files
are written atomically (temp file + rename).  Commands exit nonzero on any
violated precondition or invariant.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import bundle_config_digest, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .containers import (
    MAGIC_SAMPLES,
    ContainerError,
    atomic_write_text,
    digest_of,
    write_container,
)
from .controller import Controller, controller_targets, train_controller
from .encoder import FrozenEncoder
from .evalsuite import EvalReport, eval_capacity, eval_cycle, eval_leakage
from .model import ModelBundle, forward_step
from .planner import PRESETS, plan_to_goal, traj_errors
from .rng import Rng
from .sampler import SamplerDiverged, codebook_sample, prior_sample, sgld_sample, sparse_energy_fn
from .tensor import no_grad
from .train import TrainingDiverged, reports_to_csv, train
from .worldgen import generate_dataset, load_episodes, save_episodes


class CliError(Exception):
    """A violated precondition; reported on stderr with exit code 1."""


# -- shared plumbing -------------------------------------------------------


def _load_cfg(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _out_dir(args, cfg: RunConfig) -> str:
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _artifact_meta(cfg: RunConfig, seed: int) -> dict:
    return {"tool_version": __version__, "config_digest": cfg.digest(), "seed": seed}


def _write_json(path: str, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _expected_checkpoint_digest(cfg: RunConfig, train_cfg) -> str:
    """The digest a checkpoint trained under this config must carry."""
    blob = {
        "encoder": cfg.encoder.to_dict(),
        "grid": cfg.world.grid,
        "regularizer": cfg.regularizer.to_dict(),
        "latent_dim": cfg.model.latent_dim,
        "hidden_dim": cfg.model.hidden_dim,
        "window": cfg.model.window,
        "model_seed": cfg.model.seed,
        "train": train_cfg.to_dict(),
    }
    return digest_of(blob)


def _load_dataset(out: str, cfg: RunConfig):
    path = os.path.join(out, "dataset.bin")
    if not os.path.exists(path):
        raise CliError(f"dataset not found at {path}; run gen-data first")
    episodes, meta = load_episodes(path)
    if meta["cfg"] != cfg.world.to_dict():
        raise CliError("dataset world config does not match the run config")
    return episodes


def _append_csv(path: str, full_text: str, new_rows_text: str, resumed: bool) -> None:
    """Fresh runs get the whole file; resumed runs append only data rows."""
    if resumed and os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            old = fh.read()
        atomic_write_text(path, old + new_rows_text)
    else:
        atomic_write_text(path, full_text)


def _csv_data_rows(csv_text: str) -> str:
    lines = csv_text.splitlines(keepends=True)
    body = [ln for ln in lines if not ln.startswith("#")]
    return "".join(body[1:])  # drop the column-header line


# -- commands --------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    seed = cfg.data.seed if args.seed is None else args.seed
    files = {}
    for name, split_seed, count in (
        ("dataset.bin", seed, cfg.data.count),
        ("eval-dataset.bin", cfg.data.eval_seed, cfg.data.eval_count),
    ):
        episodes = generate_dataset(cfg.world, split_seed, count)
        save_episodes(os.path.join(out, name), episodes, _artifact_meta(cfg, split_seed))
        files[name] = {"count": count, "seed": split_seed}
        print(f"wrote {name}: {count} episodes (seed {split_seed})")
    manifest = {"kind": "dataset-manifest", **_artifact_meta(cfg, seed), "files": files}
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    train_cfg = cfg.train if args.seed is None else dataclasses.replace(cfg.train, seed=args.seed)
    episodes = _load_dataset(out, cfg)
    ckpt_path = args.checkpoint or os.path.join(out, "model.ckpt")
    expected = _expected_checkpoint_digest(cfg, train_cfg)

    resumed = os.path.exists(ckpt_path)
    if resumed:
        data = load_checkpoint(ckpt_path)
        if data.meta["config_digest"] != expected:
            raise CliError(
                "config digest mismatch on resume: the checkpoint at "
                f"{ckpt_path} was trained under a different configuration"
            )
        bundle = data.bundle
        print(f"resuming from step {bundle.step}")
    else:
        encoder = FrozenEncoder(cfg.encoder, cfg.world.grid)
        bundle = ModelBundle(
            encoder,
            cfg.regularizer,
            latent_dim=cfg.model.latent_dim,
            hidden_dim=cfg.model.hidden_dim,
            window=cfg.model.window,
            seed=cfg.model.seed,
        )

    reprs = bundle.encoder.encode_dataset(episodes)
    reports = train(bundle, reprs, train_cfg, until_step=args.until_step)
    save_checkpoint(
        ckpt_path,
        bundle,
        train_cfg,
        extra_meta={"run_config_digest": cfg.digest(), "seed": train_cfg.seed},
    )
    meta_lines = [f"{k}={v}" for k, v in _artifact_meta(cfg, train_cfg.seed).items()]
    full = reports_to_csv(reports, meta_lines)
    _append_csv(os.path.join(out, "loss.csv"), full, _csv_data_rows(full), resumed)
    print(f"trained to step {bundle.step}; checkpoint at {ckpt_path}")
    return 0


def cmd_train_controller(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    ctl_cfg = (
        cfg.controller if args.seed is None else dataclasses.replace(cfg.controller, seed=args.seed)
    )
    episodes = _load_dataset(out, cfg)
    ckpt_in = args.checkpoint or os.path.join(out, "model.ckpt")
    if not os.path.exists(ckpt_in):
        raise CliError(f"bundle checkpoint not found at {ckpt_in}; run train first")
    expected = _expected_checkpoint_digest(cfg, cfg.train)
    ckpt_out = os.path.join(out, "controller.ckpt")

    resumed = False
    if os.path.exists(ckpt_out):
        data = load_checkpoint(ckpt_out)
        if (
            data.meta["config_digest"] == expected
            and data.controller is not None
            and data.controller.cfg == ctl_cfg
        ):
            resumed = True
            bundle, controller = data.bundle, data.controller
            print(f"resuming controller from step {controller.step}")
    if not resumed:
        data = load_checkpoint(ckpt_in)
        if data.meta["config_digest"] != expected:
            raise CliError(
                "config digest mismatch: the bundle checkpoint was trained "
                "under a different configuration"
            )
        bundle, controller = data.bundle, None

    reprs = bundle.encoder.encode_dataset(episodes)
    states, actions, targets = controller_targets(bundle, reprs, episodes)
    if controller is None:
        controller = Controller(ctl_cfg, actions.shape[1], bundle.repr_dim, bundle.latent_dim)
    reports = train_controller(controller, states, actions, targets)
    save_checkpoint(
        ckpt_out,
        bundle,
        data.train_cfg,
        controller=controller,
        extra_meta={"run_config_digest": cfg.digest(), "seed": ctl_cfg.seed},
    )
    buf = io.StringIO()
    for k, v in _artifact_meta(cfg, ctl_cfg.seed).items():
        buf.write(f"# {k}={v}\n")
    buf.write("step,mse,lr\n")
    head_len = buf.tell()
    for rep in reports:
        buf.write(f"{rep['step']},{rep['mse']!r},{rep['lr']!r}\n")
    full = buf.getvalue()
    _append_csv(os.path.join(out, "controller-loss.csv"), full, full[head_len:], resumed)
    print(f"controller at step {controller.step}; checkpoint at {ckpt_out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    protocol = args.protocol or cfg.eval.protocol
    paths = args.checkpoint or []
    if not paths:
        raise CliError("eval needs at least one --checkpoint")
    loaded = [load_checkpoint(p) for p in paths]
    for p, data in zip(paths, loaded):
        if data.bundle.encoder.grid != cfg.world.grid:
            raise CliError(f"checkpoint {p} was trained on a different world grid")
    labels = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    episodes = generate_dataset(cfg.world, cfg.data.eval_seed, cfg.data.eval_count)
    pair_seed = cfg.data.eval_seed if args.seed is None else args.seed

    if protocol == "capacity":
        report = eval_capacity(
            [(lbl, d.bundle) for lbl, d in zip(labels, loaded)],
            episodes,
            ctx=cfg.eval.ctx,
            seeds={"data": cfg.data.eval_seed},
        )
    else:
        run = eval_leakage if protocol == "leakage" else eval_cycle
        kwargs = {"cut": cfg.eval.cut} if protocol == "leakage" else {"ctx": cfg.eval.ctx}
        rows, series, params = [], [], {}
        for lbl, d in zip(labels, loaded):
            # a fresh rng per bundle keeps the episode pairs identical
            # across bundles, so ratios are directly comparable
            sub = run(d.bundle, episodes, cfg.eval.n_pairs, Rng(pair_seed), label=lbl, **kwargs)
            rows += sub.rows
            for pt in sub.series:
                series.append({**pt, "series": f"{lbl}/{pt['series']}"})
            params = sub.params
        report = EvalReport(
            protocol, rows, {"data": cfg.data.eval_seed, "pairs": pair_seed}, params, series
        )
    report.params["config_digest"] = cfg.digest()

    base = os.path.join(out, f"eval-{protocol}")
    atomic_write_text(base + ".json", report.to_json())
    atomic_write_text(base + ".csv", report.to_csv())
    atomic_write_text(base + "-plot.csv", report.plot_csv())
    for row in report.rows:
        metrics = {k: v for k, v in row.items() if isinstance(v, float)}
        print(f"{protocol} {row['label']}: " + "  ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
    return 0


def cmd_plan(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    ckpt = args.checkpoint or os.path.join(out, "controller.ckpt")
    if not os.path.exists(ckpt):
        raise CliError(f"checkpoint not found at {ckpt}")
    data = load_checkpoint(ckpt)
    if data.controller is None:
        raise CliError("checkpoint has no controller; run train-controller first")
    bundle, controller = data.bundle, data.controller

    preset = args.preset or cfg.plan.preset
    cem = cfg.cem if preset == "custom" else PRESETS[preset]
    plan_seed = cfg.plan.seed if args.seed is None else args.seed
    goal_offset = cem.horizon if cfg.plan.goal_offset is None else cfg.plan.goal_offset
    window, t = bundle.window, cfg.world.n_frames
    if not 0 <= goal_offset <= t - window:
        raise CliError(f"goal_offset {goal_offset} outside [0, {t - window}]")

    episodes = generate_dataset(cfg.world, plan_seed, cfg.plan.n_episodes)
    rng = Rng(plan_seed)
    action_dim = cfg.world.action_dim
    records = []
    for i, ep in enumerate(episodes):
        reprs = bundle.encoder.encode_episode(ep)
        ctx_frames = reprs[:window]
        goal = reprs[window - 1 + goal_offset]
        gt = ep.actions[window - 1 : window - 1 + goal_offset]
        result = plan_to_goal(bundle, controller, ctx_frames, goal, cem, rng, label=f"plan/{i}")
        planned = result.actions
        # displacement error via direct sums, so plan and ground-truth
        # spans may have different lengths (empty sums are zero)
        d_plan = float(np.abs(planned.sum(axis=0) - gt.sum(axis=0)).sum())
        rnd = cem.action_low + (cem.action_high - cem.action_low) * rng.uniform(
            f"baseline/{i}", (cem.horizon, action_dim)
        )
        d_rand = float(np.abs(rnd.sum(axis=0) - gt.sum(axis=0)).sum())
        k = min(planned.shape[0], gt.shape[0])
        ate, rpe = traj_errors(planned[:k], gt[:k])
        records.append(
            {
                "episode": i,
                "cost": result.cost,
                "delta_xyz": d_plan,
                "delta_xyz_random": d_rand,
                "ate": ate,
                "rpe": rpe,
                "planned": planned.tolist(),
                "gt": gt.tolist(),
            }
        )
    meta = _artifact_meta(cfg, plan_seed)
    summary = {
        "kind": "plan-summary",
        **meta,
        "preset": preset,
        "n_episodes": len(records),
        "horizon": cem.horizon,
        "goal_offset": goal_offset,
        "bundle_digest": bundle_config_digest(bundle),
        "mean_cost": float(np.mean([r["cost"] for r in records])),
        "mean_delta_xyz": float(np.mean([r["delta_xyz"] for r in records])),
        "mean_delta_xyz_random": float(np.mean([r["delta_xyz_random"] for r in records])),
        "mean_ate": float(np.mean([r["ate"] for r in records])),
        "mean_rpe": float(np.mean([r["rpe"] for r in records])),
    }
    _write_json(os.path.join(out, "plan-episodes.json"), {**meta, "episodes": records})
    _write_json(os.path.join(out, "plan-summary.json"), summary)
    print(
        f"planned {len(records)} episodes (preset {preset}): "
        f"mean delta_xyz {summary['mean_delta_xyz']:.4f} "
        f"(random {summary['mean_delta_xyz_random']:.4f})"
    )
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args, cfg)
    ckpt = args.checkpoint or os.path.join(out, "model.ckpt")
    if not os.path.exists(ckpt):
        raise CliError(f"checkpoint not found at {ckpt}")
    bundle = load_checkpoint(ckpt).bundle
    fam = cfg.sample.family
    n = cfg.sample.n
    seed = cfg.sample.seed if args.seed is None else args.seed
    rng = Rng(seed)

    arrays: dict[str, np.ndarray] = {}
    if fam == "sgld":
        chains = sgld_sample(
            sparse_energy_fn(bundle.reg),
            bundle.latent_dim,
            cfg.sample.sgld,
            rng,
            label="sample/sgld",
            n_chains=n,
        )
        arrays["z"] = chains[:, -1, :]
    elif fam == "prior":
        arrays["z"] = prior_sample(bundle.latent_dim, rng, label="sample/prior", n=n)
    else:
        if bundle.codebook is None:
            raise CliError("codebook sampling needs a discrete-regularizer checkpoint")
        rows, picks = codebook_sample(bundle.codebook, rng, label="sample/codes", n=n)
        arrays["z"] = rows
        arrays["codes"] = picks.astype(np.int64)

    # every dump must drive the forward model without producing non-finite
    # values; a real context comes from one freshly generated episode
    probe = generate_dataset(cfg.world, cfg.data.eval_seed, 1)[0]
    reprs = bundle.encoder.encode_episode(probe)
    ctx = np.tile(reprs[: bundle.window].reshape(1, -1), (n, 1))
    try:
        with no_grad():
            pred = forward_step(bundle, ctx, arrays["z"]).data
    except FloatingPointError as exc:
        raise CliError(f"sampled latents broke the forward model: {exc}") from exc
    if not np.isfinite(pred).all():
        raise CliError("sampled latents produced non-finite predictions")

    meta = {
        "kind": "sample-dump",
        "family": fam,
        "n": n,
        **_artifact_meta(cfg, seed),
        "bundle_digest": bundle_config_digest(bundle),
    }
    path = os.path.join(out, "samples.bin")
    write_container(path, MAGIC_SAMPLES, meta, arrays)
    print(f"wrote {n} {fam} samples to {path}")
    return 0


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lamward",
        description="Latent-action world models on procedural sprite video.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, helptext, *, checkpoint=False, multi_checkpoint=False, extra=None):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", metavar="PATH", help="run config JSON (defaults used if omitted)")
        p.add_argument("--seed", type=int, metavar="N", help="override the command's seed")
        p.add_argument("--out", metavar="DIR", help="output directory (default: config out_dir)")
        if multi_checkpoint:
            p.add_argument(
                "--checkpoint", metavar="PATH", action="append", help="checkpoint file (repeatable)"
            )
        elif checkpoint:
            p.add_argument("--checkpoint", metavar="PATH", help="checkpoint file")
        for args_, kwargs_ in extra or []:
            p.add_argument(*args_, **kwargs_)
        p.set_defaults(fn=fn)
        return p

    add("gen-data", cmd_gen_data, "generate train and eval episode datasets")
    add(
        "train",
        cmd_train,
        "train or resume a model bundle",
        checkpoint=True,
        extra=[
            (
                ("--until-step",),
                {"type": int, "metavar": "K", "help": "stop early at step K (for staged runs)"},
            )
        ],
    )
    add("train-controller", cmd_train_controller, "fit the action controller", checkpoint=True)
    add(
        "eval",
        cmd_eval,
        "run an evaluation protocol over checkpoints",
        multi_checkpoint=True,
        extra=[
            (
                ("--protocol",),
                {"choices": ["capacity", "leakage", "cycle"], "help": "protocol to run"},
            )
        ],
    )
    add(
        "plan",
        cmd_plan,
        "plan to goals on fresh episodes and score against ground truth",
        checkpoint=True,
        extra=[(("--preset",), {"choices": sorted(PRESETS), "help": "planner preset"})],
    )
    add("sample", cmd_sample, "draw latents and dump them to a container", checkpoint=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, ContainerError, TrainingDiverged, SamplerDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
