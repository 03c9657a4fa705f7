import functools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kreincount import analysis
from kreincount.config import load

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES = {}


@functools.lru_cache(maxsize=None)
def run_config(name: str):
    """Report and spectra of a shipped config, computed once per session."""
    return analysis.analyze_config(load(CONFIGS / f"{name}.toml"))


@functools.lru_cache(maxsize=None)
def vortex_profile_m1():
    from kreincount.wave_operators import RadialGrid, vortex_profile
    return vortex_profile(1, 0.12, RadialGrid(400, 45.0))


@pytest.fixture
def jordan_pencil():
    from kreincount.pencil_core import Pencil
    return Pencil(np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.fixture
def diag_pencil():
    from kreincount.pencil_core import Pencil
    return Pencil(np.diag([-1.0, 1.0]), np.diag([1.0, -1.0]))


@pytest.fixture
def complex_pencil():
    from kreincount.pencil_core import Pencil
    return Pencil(np.array([[0.0, 1.0], [1.0, 0.0]]), np.diag([1.0, -1.0]))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
