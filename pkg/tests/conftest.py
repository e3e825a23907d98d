import numpy as np
import pytest

from nvmagnon.core import Config, FilmStack, FieldConfig
from nvmagnon.noise import locate_peak
from nvmagnon.response import self_energy_theory

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def magnetostatic_film():
    return FilmStack(exchange_lambda=0.0)


def dense_field_grid():
    """0.1 G across the resonance, 0.5 G elsewhere, 20-620 G."""
    fine = np.round(np.arange(20.0, 130.0, 0.1), 10)
    coarse = np.arange(130.0, 620.0 + 0.25, 0.5)
    return np.concatenate([fine, coarse])


@pytest.fixture(scope="session")
def theory_curve(cfg):
    c, film, nv, _ = cfg
    return self_energy_theory(nv, film, dense_field_grid(), c)


@pytest.fixture(scope="session")
def peak(cfg):
    c, film, nv, _ = cfg
    return locate_peak(nv, film, c)


@pytest.fixture(scope="session")
def field_at():
    return lambda h, p=0.0: FieldConfig(h, p)
