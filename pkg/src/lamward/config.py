"""One structured config for a whole run, with a digest for traceability.

A ``RunConfig`` groups every sub-config the pipeline needs into a single
JSON document.  The same digest is embedded in every artifact a run
produces, so datasets, checkpoints, reports, and sample dumps can always be
traced back to the exact configuration that made them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .containers import atomic_write_text, digest_of
from .controller import ControllerCfg
from .encoder import EncoderCfg
from .evalsuite import PROTOCOLS
from .planner import PRESETS, CemCfg
from .regularizers import RegularizerCfg
from .sampler import SgldCfg
from .train import TrainCfg
from .worldgen import WorldCfg


@dataclass(frozen=True)
class ModelCfg:
    """Bundle architecture knobs that sit outside the regularizer."""

    latent_dim: int = 16
    hidden_dim: int = 96
    window: int = 2
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelCfg":
        return cls(**d)


@dataclass(frozen=True)
class DataCfg:
    """Dataset sizes and seeds for the train and eval splits."""

    seed: int = 0
    count: int = 256
    eval_seed: int = 1
    eval_count: int = 64

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DataCfg":
        return cls(**d)


@dataclass(frozen=True)
class EvalCfg:
    protocol: str = "capacity"
    n_pairs: int = 128
    ctx: int = 2
    cut: int | None = None  # None: halfway through the episode

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.n_pairs < 1 or self.ctx < 1:
            raise ValueError("n_pairs and ctx must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalCfg":
        return cls(**d)


@dataclass(frozen=True)
class PlanCfg:
    """Goal-reaching evaluation: plan toward a frame ``goal_offset`` steps
    past the context window and compare against the ground-truth actions."""

    preset: str = "manip"
    n_episodes: int = 64
    goal_offset: int | None = None  # None: the planning horizon
    seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESETS and self.preset != "custom":
            choices = sorted(PRESETS) + ["custom"]
            raise ValueError(f"unknown preset {self.preset!r}; choose from {choices}")
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PlanCfg":
        return cls(**d)


SAMPLE_FAMILIES = ("sgld", "prior", "codebook")


@dataclass(frozen=True)
class SampleCfg:
    family: str = "sgld"
    n: int = 64
    seed: int = 0
    sgld: SgldCfg = field(default_factory=SgldCfg)

    def __post_init__(self):
        if self.family not in SAMPLE_FAMILIES:
            raise ValueError(f"unknown sample family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sgld"] = self.sgld.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleCfg":
        d = dict(d)
        if "sgld" in d:
            d["sgld"] = SgldCfg.from_dict(d["sgld"])
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    world: WorldCfg = field(default_factory=WorldCfg)
    encoder: EncoderCfg = field(default_factory=EncoderCfg)
    regularizer: RegularizerCfg = field(default_factory=RegularizerCfg)
    model: ModelCfg = field(default_factory=ModelCfg)
    train: TrainCfg = field(default_factory=TrainCfg)
    controller: ControllerCfg = field(default_factory=ControllerCfg)
    cem: CemCfg = field(default_factory=lambda: PRESETS["manip"])
    data: DataCfg = field(default_factory=DataCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    plan: PlanCfg = field(default_factory=PlanCfg)
    sample: SampleCfg = field(default_factory=SampleCfg)
    out_dir: str = "out"

    _SECTIONS = {
        "world": WorldCfg,
        "encoder": EncoderCfg,
        "regularizer": RegularizerCfg,
        "model": ModelCfg,
        "train": TrainCfg,
        "controller": ControllerCfg,
        "cem": CemCfg,
        "data": DataCfg,
        "eval": EvalCfg,
        "plan": PlanCfg,
        "sample": SampleCfg,
    }

    def to_dict(self) -> dict:
        doc = {name: getattr(self, name).to_dict() for name in self._SECTIONS}
        doc["out_dir"] = self.out_dir
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = set(doc) - set(cls._SECTIONS) - {"out_dir"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {
            name: typ.from_dict(doc[name]) for name, typ in cls._SECTIONS.items() if name in doc
        }
        if "out_dir" in doc:
            kwargs["out_dir"] = doc["out_dir"]
        return cls(**kwargs)

    def to_json(self) -> str:
        """Human-editable text form; stable key order for diffability."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return digest_of(self.to_dict())

    def replace(self, **section_kwargs) -> "RunConfig":
        return dataclasses.replace(self, **section_kwargs)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_json(fh.read())


def save_config(path: str, cfg: RunConfig) -> None:
    atomic_write_text(path, cfg.to_json())
