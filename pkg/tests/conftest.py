"""Session fixtures shared by the acceptance suite.

One pinned world, one frozen encoder, and one pinned training recipe feed
every acceptance criterion.  Bundles are trained lazily through a factory
fixture, so running a subset of tests only pays for the bundles it uses,
and the factory records wall-clock training time for the budget check.
"""

import time

import pytest

from lamward.controller import ControllerCfg
from lamward.encoder import EncoderCfg, FrozenEncoder
from lamward.model import ModelBundle
from lamward.regularizers import RegularizerCfg
from lamward.train import TrainCfg, train
from lamward.worldgen import WorldCfg, generate_dataset

ACCEPT_WORLD = WorldCfg(distractor_rate=0.0)
ACCEPT_ENCODER = EncoderCfg()
ACCEPT_TRAIN = TrainCfg(steps=3000, batch_size=32, seed=7)
ACCEPT_MODEL_SEED = 3
# controller recipe for the mid-capacity bundle; the default lr leaves the
# fit short of the rollout band (AdamW's normalized steps cap total travel)
ACCEPT_CTL = ControllerCfg(lr=5e-3, steps=3000, hidden_dim=128, weight_decay=0.01)
DATA_SEED, DATA_COUNT = 101, 256
EVAL_SEED, EVAL_COUNT = 202, 96

# never-firing reset period for the dead-code twin comparison
_NO_RESET = 10**9

BUNDLE_SPECS = {
    "none": RegularizerCfg(kind="none"),
    "sparse-weak": RegularizerCfg(kind="sparse", l1_weight=0.01),
    "sparse-strong": RegularizerCfg(kind="sparse", l1_weight=0.4),
    "noisy-weak": RegularizerCfg(kind="noisy", beta=1e-5),
    "noisy-strong": RegularizerCfg(kind="noisy", beta=5e-3),
    "discrete": RegularizerCfg(kind="discrete"),
    "discrete-no-reset": RegularizerCfg(kind="discrete", reset_period=_NO_RESET),
    "deterministic": RegularizerCfg(kind="deterministic"),
}

# the bundle the controller/planning criteria run on
MID_CAPACITY = "noisy-strong"


@pytest.fixture(scope="session")
def world_cfg():
    return ACCEPT_WORLD


@pytest.fixture(scope="session")
def shared_encoder():
    return FrozenEncoder(ACCEPT_ENCODER, ACCEPT_WORLD.grid)


@pytest.fixture(scope="session")
def train_episodes():
    return generate_dataset(ACCEPT_WORLD, DATA_SEED, DATA_COUNT)


@pytest.fixture(scope="session")
def eval_episodes():
    return generate_dataset(ACCEPT_WORLD, EVAL_SEED, EVAL_COUNT)


@pytest.fixture(scope="session")
def train_reprs(shared_encoder, train_episodes):
    return shared_encoder.encode_dataset(train_episodes)


@pytest.fixture(scope="session")
def eval_reprs(shared_encoder, eval_episodes):
    return shared_encoder.encode_dataset(eval_episodes)


@pytest.fixture(scope="session")
def trained_bundles(shared_encoder, train_reprs):
    """Factory: trained_bundles(name) -> ModelBundle, cached per session.

    ``trained_bundles.seconds`` accumulates the wall-clock spent inside
    train() across all bundles, for the training-budget criterion.
    """
    cache = {}

    def get(name: str) -> ModelBundle:
        if name not in cache:
            bundle = ModelBundle(shared_encoder, BUNDLE_SPECS[name], seed=ACCEPT_MODEL_SEED)
            t0 = time.monotonic()
            train(bundle, train_reprs, ACCEPT_TRAIN)
            get.seconds += time.monotonic() - t0
            cache[name] = bundle
        return cache[name]

    get.seconds = 0.0
    return get
