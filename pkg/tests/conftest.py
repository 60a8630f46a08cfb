"""
Shared fixtures. The run registry and the output root are pointed at a throw-away
directory before any project module reads its settings.
"""

import os
import tempfile
from pathlib import Path

_SCRATCH = Path(tempfile.mkdtemp(prefix="eegdm-tests-"))
os.environ["EEGDM_OUT"] = str(_SCRATCH / "runs")
os.environ["DATABASE_URL"] = f"sqlite:///{_SCRATCH / 'registry.db'}"
os.environ.setdefault("EEGDM_DEVICE", "cpu")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
import torch  # noqa: E402

from config.run_config import RunConfig, parse_run_config  # noqa: E402
from tests.helpers import tiny_raw_config  # noqa: E402
from tools.pretrain import Pretrainer  # noqa: E402
from tools.signal_store import load_samples  # noqa: E402


@pytest.fixture
def tiny_config() -> RunConfig:
    return parse_run_config(tiny_raw_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def tiny_samples():
    return load_samples(parse_run_config(tiny_raw_config()).data)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_samples):
    """A checkpoint trained for a handful of steps; tests must not mutate its weights."""
    trainer = Pretrainer(parse_run_config(tiny_raw_config()), seed=0, samples=tiny_samples)
    trainer.fit(steps=3, progress=False)
    return trainer.checkpoint()
