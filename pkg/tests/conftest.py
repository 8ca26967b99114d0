import time

import numpy as np
import pytest

from isacdesign.ao import interleaved_schedule
from isacdesign.config import DESK_YAML, SolverConfig
from isacdesign.model import desk_scenario


@pytest.fixture(scope="session")
def desk_run():
    """The three-block desk design, computed once per session, with its wall time."""
    start = time.perf_counter()
    sched = interleaved_schedule(desk_scenario(0), 3, SolverConfig())
    return sched, time.perf_counter() - start


@pytest.fixture
def desk_yaml(tmp_path):
    path = tmp_path / "desk.yaml"
    path.write_text(DESK_YAML)
    return path


@pytest.fixture
def small_yaml(tmp_path):
    """A reduced scenario that designs in a couple of seconds."""
    text = DESK_YAML.replace("n_s: 16", "n_s: 8").replace("n_cp: 4", "n_cp: 2")
    text = text.replace("num_symbols: 16", "num_symbols: 4").replace("num_blocks: 3", "num_blocks: 2")
    text += "  ao_max_iter: 4\n  ao_min_iter: 2\n  sca_max_iter: 5\n  check_surrogate_samples: 50\n"
    path = tmp_path / "small.yaml"
    path.write_text(text)
    return path


@pytest.fixture
def small_scenario():
    return desk_scenario(3, n_s=8, n_cp=2, num_symbols=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
