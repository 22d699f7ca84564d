import numpy as np
import pytest
from hypothesis import settings

from spopo.config import PumpConfig, reference_config
from spopo.fixtures import load_fixture_bundle
from spopo.pipeline import monte_carlo_blocks
from spopo.simulate import run_simulation
from spopo.state import CovarianceState

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_cfg():
    return reference_config()


@pytest.fixture(scope="session")
def ref_sim(ref_cfg):
    return run_simulation(ref_cfg)


@pytest.fixture(scope="session")
def single_line_sim(ref_cfg):
    return run_simulation(ref_cfg.replace(pump=PumpConfig("single-line", None)))


@pytest.fixture(scope="session")
def fixture_bundle():
    return load_fixture_bundle()


@pytest.fixture(scope="session")
def fixture_mc(fixture_bundle, ref_cfg):
    a = ref_cfg.analysis
    return monte_carlo_blocks(fixture_bundle.levels(), a.mc_samples, a.seed)


def random_physical_state(rng: np.random.Generator, n: int, mixed: bool = True) -> CovarianceState:
    """C_x = M Dx M^T, C_p = M^-T Dp M^-1 with Dx Dp >= 1: a symplectic image of a thermal-squeezed product."""
    m = rng.normal(size=(n, n)) + 2 * np.eye(n)
    while abs(np.linalg.det(m)) < 0.1:
        m = rng.normal(size=(n, n)) + 2 * np.eye(n)
    s = np.exp(rng.uniform(-1, 1, n))
    t = rng.uniform(1, 2, n) if mixed else np.ones(n)
    minv = np.linalg.inv(m)
    return CovarianceState(m @ np.diag(s * t) @ m.T, minv.T @ np.diag(t / s) @ minv)
