import sys
from pathlib import Path

import numpy as np
import pytest

from autorad.phantom import PhantomSpec, generate_dataset, write_dataset

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def small_spec():
    return PhantomSpec(n_per_class=4, seed=11)


@pytest.fixture(scope="session")
def small_cohort(small_spec):
    """Images, masks and records of a 4 + 4 phantom cohort."""
    return generate_dataset(small_spec)


@pytest.fixture(scope="session")
def lesion(small_cohort):
    images, masks, _ = small_cohort
    return images[-1], masks[-1]


@pytest.fixture(scope="session")
def written_cohort(tmp_path_factory, small_spec):
    out = tmp_path_factory.mktemp("phantom")
    write_dataset(small_spec, out, observer2_magnitude=0.2)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
