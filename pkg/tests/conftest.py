import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kinfp.grid import PhaseField, PhaseGrid

settings.register_profile("kinfp", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kinfp")


def band_limited(grid, seed=0, frac=0.25):
    """Random real field whose spectrum lives in the lowest ``frac`` of each axis."""
    rng = np.random.default_rng(seed)
    spec = np.zeros(grid.shape, dtype=complex)
    mask = np.ones(grid.shape, dtype=bool)
    for a, n in enumerate(grid.shape):
        k = np.abs(np.fft.fftfreq(n) * n)
        mask = mask & (k < frac * n / 2).reshape(grid._bshape(a, n))
    spec[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    vals = np.real(np.fft.ifftn(spec))
    return PhaseField(grid, vals / np.abs(vals).max())


@pytest.fixture
def kgrid():
    return PhaseGrid.phase(1, 2 * np.pi, 32, 8.0, 32)


@pytest.fixture
def pgrid2():
    return PhaseGrid.position(2, 2 * np.pi, 32)


ACCEPTANCE_LINES = []


def report(number, title, ok, detail):
    """Record and print one acceptance line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
