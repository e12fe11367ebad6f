"""Logarithmic convolution potential and the split interaction functionals.

``w = log|.| * u^2`` is evaluated as an exact lattice sum by zero-padded FFT
convolution on a ``2N x 2N`` array.  The kernel is split as
``log r = log(1 + r) - log(1 + 1/r)`` into two nonnegative parts.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .grid import Field, GridMismatchError, GridSpec, mass

# mean of log|z| over the unit square [-1/2, 1/2]^2
UNIT_CELL_LOG_MEAN = -0.5 * math.log(2.0) - 1.5 + math.pi / 4.0

# Midpoint sums of log|z| * f over the punctured lattice overshoot the integral
# by (pi/12) h^2 f(0) (flux of grad log|z| out of the origin cell); folding that
# into the origin weight removes the leading O(h^2) quadrature error.
ORIGIN_FLUX_CORRECTION = math.pi / 12.0

ORIGIN_RULES = ("corrected", "cell-average")
DEFAULT_ORIGIN = "corrected"


def origin_value(h: float, rule: str = DEFAULT_ORIGIN) -> float:
    """Weight of the origin cell in the ``log|z|`` lattice sum.

    ``"cell-average"`` is the mean of ``log|z|`` over ``[-h/2, h/2]^2``;
    ``"corrected"`` subtracts the flux term as well.
    """
    if rule == "cell-average":
        return math.log(h) + UNIT_CELL_LOG_MEAN
    if rule == "corrected":
        return math.log(h) + UNIT_CELL_LOG_MEAN - ORIGIN_FLUX_CORRECTION
    raise ValueError(f"unknown origin rule {rule!r}; expected one of {ORIGIN_RULES}")


def displacement_lattice(grid: GridSpec) -> np.ndarray:
    """Distances ``|z|`` on the wrapped ``2N x 2N`` displacement lattice."""
    n = grid.N
    m = np.arange(2 * n)
    d = np.where(m < n, m, m - 2 * n) * grid.h
    return np.hypot(d[:, None], d[None, :])


def _kernels(r: np.ndarray, k0_origin: float) -> dict[str, np.ndarray]:
    origin = r == 0.0
    rs = np.where(origin, 1.0, r)
    k0 = np.where(origin, k0_origin, np.log(rs))
    k1 = np.log1p(r)
    k2 = np.where(origin, -k0_origin, np.log1p(1.0 / rs))
    return {"k0": k0, "k1": k1, "k2": k2}


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Kernel samples and their transforms for one grid."""

    grid: GridSpec
    origin: str
    k0: np.ndarray = field(repr=False)
    k1: np.ndarray = field(repr=False)
    k2: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, grid: GridSpec, origin: str = DEFAULT_ORIGIN) -> "KernelTables":
        tabs = _kernels(displacement_lattice(grid), origin_value(grid.h, origin))
        for a in tabs.values():
            a.setflags(write=False)
        return cls(grid, origin, **tabs)

    @property
    def k0_origin(self) -> float:
        return float(self.k0[0, 0])

    @cached_property
    def transforms(self) -> dict[str, np.ndarray]:
        return {name: sfft.rfft2(getattr(self, name)) for name in ("k0", "k1", "k2")}

    def convolve(self, density: np.ndarray, kernel: str = "k0") -> np.ndarray:
        """``h^2 * sum_kl K(x_ij - x_kl) density_kl`` for all nodes."""
        n = self.grid.N
        rho = sfft.rfft2(density, s=(2 * n, 2 * n))
        out = sfft.irfft2(rho * self.transforms[kernel], s=(2 * n, 2 * n))
        return self.grid.h ** 2 * out[:n, :n]


_TABLES: dict[tuple[GridSpec, str], KernelTables] = {}
_LOCK = threading.Lock()


def kernel_tables(grid: GridSpec, origin: str = DEFAULT_ORIGIN) -> KernelTables:
    key = (grid, origin)
    tabs = _TABLES.get(key)
    if tabs is None:
        with _LOCK:
            tabs = _TABLES.get(key)
            if tabs is None:
                tabs = KernelTables.build(grid, origin)
                tabs.transforms  # noqa: B018  build the cache before sharing
                _TABLES[key] = tabs
    return tabs


def log_potential(u: Field, tables: KernelTables | None = None, origin: str = DEFAULT_ORIGIN) -> Field:
    """The potential ``w(x) = int log|x - y| u(y)^2 dy`` on the grid."""
    if tables is None:
        tables = kernel_tables(u.grid, origin)
    if tables.grid != u.grid:
        raise GridMismatchError(f"kernel tables built for {tables.grid}, field on {u.grid}")
    return Field(u.grid, tables.convolve(u.values ** 2, "k0"))


def _interaction(u: Field, kernel: str, origin: str) -> float:
    dens = u.values ** 2
    pot = kernel_tables(u.grid, origin).convolve(dens, kernel)
    return float(u.grid.h ** 2 * np.sum(dens * pot))


def v0(u: Field, origin: str = DEFAULT_ORIGIN) -> float:
    """``int int log|x - y| u^2(x) u^2(y)``."""
    return _interaction(u, "k0", origin)


def v1(u: Field, origin: str = DEFAULT_ORIGIN) -> float:
    return _interaction(u, "k1", origin)


def v2(u: Field, origin: str = DEFAULT_ORIGIN) -> float:
    return _interaction(u, "k2", origin)


def potential_asymptotics_residual(u: Field, w: Field | None = None, origin: str = DEFAULT_ORIGIN) -> float:
    """Largest ``|w(x) - log|x| * mass(u)|`` over the outermost ring of cells."""
    m = mass(u)
    if m <= 0.0:
        raise ValueError("potential asymptotics need a field with positive mass")
    if w is None:
        w = log_potential(u, origin=origin)
    ring = u.grid.outer_ring()
    dev = w.values[ring] - np.log(u.grid.radius[ring]) * m
    return float(np.max(np.abs(dev)))


# -- brute-force oracle -------------------------------------------------------

def direct_log_potential(u: Field, kernel: str = "k0", origin: str = DEFAULT_ORIGIN, chunk: int = 256) -> Field:
    """O(N^4) direct lattice sum, independent of the FFT path."""
    grid = u.grid
    h = grid.h
    k0_origin = origin_value(h, origin)
    X, Y = (c.ravel() for c in grid.coords)
    dens = (u.values ** 2).ravel()
    src = np.nonzero(dens)[0]
    xs, ys, ds = X[src], Y[src], dens[src]
    out = np.empty(X.size)
    for start in range(0, X.size, chunk):
        sl = slice(start, start + chunk)
        r = np.hypot(X[sl, None] - xs[None, :], Y[sl, None] - ys[None, :])
        k = _kernels(r, k0_origin)[kernel]
        out[sl] = k @ ds
    return Field(grid, h * h * out.reshape(grid.shape))


def direct_interaction(u: Field, kernel: str = "k0", origin: str = DEFAULT_ORIGIN) -> float:
    w = direct_log_potential(u, kernel, origin)
    return float(u.grid.h ** 2 * np.sum(u.values ** 2 * w.values))
