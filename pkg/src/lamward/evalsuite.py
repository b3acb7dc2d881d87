"""The three measurement protocols: capacity sweep, scene-cut leakage, and
action cycle consistency.

Every protocol reports errors in representation space and leans on ratios,
not absolute values.  Reports are pure functions of (bundle, episodes, seed),
so rerunning one produces byte-identical output.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .checkpoint import bundle_config_digest
from .containers import canonical_json
from .model import ModelBundle, idm_infer, one_step_errors, rollout, transition_pairs
from .parallel import map_ordered
from .rng import Rng
from .tensor import no_grad
from .worldgen import Episode, stitch_scene_cut

PROTOCOLS = ("capacity", "leakage", "cycle")


@dataclass
class EvalReport:
    protocol: str
    rows: list[dict]
    seeds: dict
    params: dict
    series: list[dict] = field(default_factory=list)  # {series, x, y} points
    tool_version: str = __version__

    def to_json(self) -> str:
        return canonical_json(
            {
                "protocol": self.protocol,
                "tool_version": self.tool_version,
                "seeds": self.seeds,
                "params": self.params,
                "rows": self.rows,
            }
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# protocol={self.protocol}\n")
        buf.write(f"# tool_version={self.tool_version}\n")
        buf.write(f"# seeds={canonical_json(self.seeds)}\n")
        buf.write(f"# params={canonical_json(self.params)}\n")
        cols = list(self.rows[0].keys()) if self.rows else []
        buf.write(",".join(cols) + "\n")
        for row in self.rows:
            buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in (row[c] for c in cols)) + "\n")
        return buf.getvalue()

    def plot_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# protocol={self.protocol} plot data\n")
        buf.write("series,x,y\n")
        for pt in self.series:
            buf.write(f"{pt['series']},{pt['x']!r},{pt['y']!r}\n")
        return buf.getvalue()


def _distinct_pairs(rng: Rng, label: str, n_pairs: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least two episodes to form pairs")
    ia = rng.integers(f"{label}/a", (n_pairs,), 0, n)
    ib = rng.integers(f"{label}/b", (n_pairs,), 0, n)
    return ia, np.where(ib == ia, (ib + 1) % n, ib)


def eval_capacity(
    entries: list[tuple[str, ModelBundle]],
    episodes: list[Episode],
    ctx: int = 2,
    seeds: dict | None = None,
) -> EvalReport:
    """Mean one-step (teacher-forced) and rollout error per bundle.

    All bundles must share the frozen encoder; rows keep the caller's order,
    which by convention runs from weakest to strongest regularization.
    """
    if not entries:
        raise ValueError("no bundles to evaluate")
    digests = {b.encoder.digest() for _, b in entries}
    if len(digests) > 1:
        raise ValueError("bundles use different encoders; metrics would not be comparable")
    reprs = entries[0][1].encoder.encode_dataset(episodes)
    rows = []
    series = []
    for i, (label, bundle) in enumerate(entries):
        one = float(one_step_errors(bundle, reprs).mean())
        roll = float(rollout(bundle, reprs, ctx, source="idm").mean_error)
        rows.append(
            {
                "label": label,
                "digest": bundle_config_digest(bundle),
                "one_step_error": one,
                "rollout_error": roll,
            }
        )
        series.append({"series": "one_step", "x": float(i), "y": one})
        series.append({"series": "rollout", "x": float(i), "y": roll})
    params = {"ctx": ctx, "n_episodes": len(episodes)}
    return EvalReport("capacity", rows, seeds or {}, params, series)


def leakage_errors(
    bundle: ModelBundle, episodes: list[Episode], ia: np.ndarray, ib: np.ndarray, cut: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair one-step error at the cut transition, original vs stitched."""
    stitched = map_ordered(
        lambda ab: stitch_scene_cut(episodes[ab[0]], episodes[ab[1]], cut), zip(ia, ib)
    )
    orig_reprs = bundle.encoder.encode_dataset([episodes[i] for i in ia])
    stit_reprs = bundle.encoder.encode_dataset(stitched)
    e_orig = one_step_errors(bundle, orig_reprs)[:, cut - 1]
    e_stit = one_step_errors(bundle, stit_reprs)[:, cut - 1]
    return e_orig, e_stit


def eval_leakage(
    bundle: ModelBundle,
    episodes: list[Episode],
    n_pairs: int,
    rng: Rng,
    cut: int | None = None,
    label: str = "model",
    seeds: dict | None = None,
) -> EvalReport:
    """Error increase on the single transition that spans a scene cut.

    A latent inferred from the impossible pre/post-cut frame pair cannot
    carry the new scene unless the model leaks next-frame content through
    it, so a healthy regularized model shows a clear error spike.
    Reads frames only, never ground-truth actions.
    """
    t = episodes[0].frames.shape[0]
    cut = t // 2 if cut is None else cut
    if not 2 <= cut <= t - 1:
        raise ValueError(f"cut must lie in [2, {t - 1}]")
    ia, ib = _distinct_pairs(rng, "leakage", n_pairs, len(episodes))
    e_orig, e_stit = leakage_errors(bundle, episodes, ia, ib, cut)
    mean_orig = float(e_orig.mean())
    mean_stit = float(e_stit.mean())
    rows = [
        {
            "label": label,
            "digest": bundle_config_digest(bundle),
            "err_original": mean_orig,
            "err_stitched": mean_stit,
            "ratio": mean_stit / mean_orig,
            "n_pairs": n_pairs,
        }
    ]
    series = [{"series": "original", "x": float(i), "y": float(v)} for i, v in enumerate(e_orig)]
    series += [{"series": "stitched", "x": float(i), "y": float(v)} for i, v in enumerate(e_stit)]
    params = {"cut": cut, "n_pairs": n_pairs}
    return EvalReport("leakage", rows, seeds or {}, params, series)


def cycle_errors(
    bundle: ModelBundle, reprs_a: np.ndarray, reprs_b: np.ndarray, ctx: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair rollout errors: direct (A with its own latents) vs after the
    A -> B -> A transfer round trip."""
    p, t, _ = reprs_a.shape
    with no_grad():
        s_t, s_tp1 = transition_pairs(reprs_a)
        z1 = idm_infer(bundle, s_t, s_tp1).z.data.reshape(p, t - 1, -1)
        b_hat = rollout(bundle, reprs_b, ctx, source="given", latents=z1).predictions
        s_t2, s_tp12 = transition_pairs(b_hat)
        z2 = idm_infer(bundle, s_t2, s_tp12).z.data.reshape(p, t - 1, -1)
    direct = rollout(bundle, reprs_a, ctx, source="given", latents=z1)
    cycled = rollout(bundle, reprs_a, ctx, source="given", latents=z2)
    return direct.errors.mean(axis=1), cycled.errors.mean(axis=1)


def eval_cycle(
    bundle: ModelBundle,
    episodes: list[Episode],
    n_pairs: int,
    rng: Rng,
    ctx: int = 2,
    label: str = "model",
    seeds: dict | None = None,
) -> EvalReport:
    """Latents inferred on A, applied to B, re-inferred from the model's own
    B predictions, applied back to A.  The ratio to the direct rollout says
    how much action content survives the round trip."""
    ia, ib = _distinct_pairs(rng, "cycle", n_pairs, len(episodes))
    reprs_a = bundle.encoder.encode_dataset([episodes[i] for i in ia])
    reprs_b = bundle.encoder.encode_dataset([episodes[i] for i in ib])
    e_direct, e_cycle = cycle_errors(bundle, reprs_a, reprs_b, ctx)
    mean_direct = float(e_direct.mean())
    mean_cycle = float(e_cycle.mean())
    rows = [
        {
            "label": label,
            "digest": bundle_config_digest(bundle),
            "err_direct": mean_direct,
            "err_cycle": mean_cycle,
            "ratio": mean_cycle / mean_direct,
            "n_pairs": n_pairs,
        }
    ]
    series = [{"series": "direct", "x": float(i), "y": float(v)} for i, v in enumerate(e_direct)]
    series += [{"series": "cycle", "x": float(i), "y": float(v)} for i, v in enumerate(e_cycle)]
    params = {"ctx": ctx, "n_pairs": n_pairs}
    return EvalReport("cycle", rows, seeds or {}, params, series)
