import numpy as np
import pytest
from hypothesis import settings

from kvnlab.kvn_propagator import PhaseSpaceGrid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid256():
    return PhaseSpaceGrid(256, 256, -8, 8, -8, 8)


@pytest.fixture(scope="session")
def grid64():
    return PhaseSpaceGrid(64, 64, -8, 8, -8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "out"
    monkeypatch.setenv("KVNLAB_OUTPUT_ROOT", str(root))
    return root
