import numpy as np
import pytest

from ringswarm.ring import MorseKernel, RingField, RingGrid, von_mises_field


@pytest.fixture
def grid():
    return RingGrid(256)


@pytest.fixture
def morse():
    return MorseKernel(0.5, 0.5)


@pytest.fixture
def target(grid):
    return von_mises_field(0.0, 4.0, 100.0, grid)


def smooth_field(grid, rng, modes=6, offset=0.0):
    """Random trigonometric polynomial sampled on ``grid``."""
    x = grid.x
    v = np.full(grid.m, offset)
    for n in range(1, modes + 1):
        a, b = rng.normal(size=2) / n
        v += a * np.cos(n * x) + b * np.sin(n * x)
    return RingField(grid, v)


_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line: ``verdict(number, ok, detail)``."""
    table = request.config.stash[_VERDICTS]

    def record(number, ok, detail):
        table[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_VERDICTS, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        ok, detail = table[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
