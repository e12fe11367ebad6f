from __future__ import annotations

import functools

import numpy as np
import pytest

from logsp.energy import Params
from logsp.grid import GridSpec
from logsp.solver import SolverConfig, solve
from logsp.symmetry import SymmetryGroup


@functools.lru_cache(maxsize=None)
def solved(p: float, strategy: str = "fiber", group: str | None = None, N: int = 256, L: float = 12.0):
    """One solve per parameter set per test session."""
    params = Params(p, GridSpec(L, N))
    g = SymmetryGroup.parse(group) if group else None
    return solve(params, SolverConfig(), g, strategy=strategy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian(grid: GridSpec, amp: float = 1.0, width: float = 1.0, x0: float = 0.0, y0: float = 0.0):
    return grid.sample(lambda x, y: amp * np.exp(-((x - x0) ** 2 + (y - y0) ** 2) / (2 * width ** 2)))


def random_bump_field(grid: GridSpec, rng, bumps: int = 3):
    """Smooth random field: a few Gaussians of random sign, width and position."""
    X, Y = grid.coords
    v = np.zeros(grid.shape)
    for _ in range(bumps):
        c = rng.uniform(-0.3, 0.3, 2) * grid.L
        w = rng.uniform(0.5, 1.5)
        v += rng.normal() * np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * w * w))
    from logsp.grid import Field

    return Field(grid, v)


def pytest_terminal_summary(terminalreporter):
    from .acceptance_log import lines

    out = lines()
    if out:
        terminalreporter.section("acceptance criteria")
        for line in out:
            terminalreporter.write_line(line)
