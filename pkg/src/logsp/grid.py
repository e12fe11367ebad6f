"""Cell-centered square grid, fields, quadrature and discrete operators.

The domain ``[-L, L]^2`` is split into ``N x N`` cells of side ``h = 2L/N``;
values live at cell centers.  Outside the domain the field is taken to be
zero (homogeneous Dirichlet truncation, one ghost cell deep).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields bound to different grids are combined."""


@dataclass(frozen=True)
class GridSpec:
    half_width: float
    points_per_side: int

    def __post_init__(self):
        n = self.points_per_side
        if int(n) != n or n < 2 or n % 2:
            raise ValueError(f"points_per_side must be an even integer >= 2, got {n!r}")
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        object.__setattr__(self, "points_per_side", int(n))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def N(self) -> int:
        return self.points_per_side

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points_per_side

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @cached_property
    def axis(self) -> np.ndarray:
        """1D node coordinates ``-L + (i + 1/2) h``."""
        i = np.arange(self.N)
        return -self.L + (i + 0.5) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` with ``X[i, j] = x_i`` and ``Y[i, j] = y_j``."""
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y = self.coords
        return np.hypot(X, Y)

    def index_to_coord(self, i: int, j: int) -> tuple[float, float]:
        return float(self.axis[i]), float(self.axis[j])

    def coord_to_index(self, x: float, y: float) -> tuple[int, int]:
        i = int(round((x + self.L) / self.h - 0.5))
        j = int(round((y + self.L) / self.h - 0.5))
        if not (0 <= i < self.N and 0 <= j < self.N):
            raise ValueError(f"point ({x}, {y}) lies outside the grid")
        return i, j

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def sample(self, fn) -> "Field":
        """Evaluate ``fn(X, Y)`` at the cell centers."""
        X, Y = self.coords
        return Field(self, np.broadcast_to(np.asarray(fn(X, Y), dtype=float), self.shape).copy())

    def outer_ring(self) -> np.ndarray:
        """Boolean mask of the outermost layer of cells."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a function on a :class:`GridSpec`.

    ``values`` has shape ``(N, N)``; index ``[i, j]`` is the node
    ``(x_i, y_j)``.  Flattening in C order gives the row-major layout used by
    the LSPF1 dump format.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size == self.grid.N ** 2:
                v = v.reshape(self.grid.shape)
            else:
                raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v = v.copy() if v is self.values else v
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"grid {other.grid} does not match {self.grid}")

    def _binary(self, other, op):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, op(self.values, other.values))
        return Field(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def __eq__(self, other):
        return (
            isinstance(other, Field)
            and other.grid == self.grid
            and np.array_equal(other.values, self.values)
        )

    __hash__ = None

    def map(self, fn) -> "Field":
        return Field(self.grid, fn(self.values))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


def check_same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid {f.grid} does not match {grid}")
    return grid


def integrate(f: Field) -> float:
    """Rectangle rule ``h^2 * sum f``."""
    return float(f.grid.h ** 2 * np.sum(f.values))


def inner(f: Field, g: Field) -> float:
    check_same_grid(f, g)
    return float(f.grid.h ** 2 * np.vdot(f.values, g.values))


def lp_norm_p(u: Field, p: float) -> float:
    """``|u|_p^p`` (no root taken)."""
    if not p > 2:
        raise ValueError(f"exponent must exceed 2, got {p}")
    return float(u.grid.h ** 2 * np.sum(np.abs(u.values) ** p))


def laplacian_array(v: np.ndarray, h: float) -> np.ndarray:
    out = -4.0 * v
    out[1:, :] += v[:-1, :]
    out[:-1, :] += v[1:, :]
    out[:, 1:] += v[:, :-1]
    out[:, :-1] += v[:, 1:]
    return out / (h * h)


def laplacian(u: Field) -> Field:
    """Five-point Laplacian with zero ghost cells."""
    return Field(u.grid, laplacian_array(u.values, u.grid.h))


def laplacian4_array(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order cross stencil ``(-1, 16, -30, 16, -1) / 12h^2`` per axis, zero ghosts."""
    out = -60.0 * v
    out[1:, :] += 16.0 * v[:-1, :]
    out[:-1, :] += 16.0 * v[1:, :]
    out[:, 1:] += 16.0 * v[:, :-1]
    out[:, :-1] += 16.0 * v[:, 1:]
    out[2:, :] -= v[:-2, :]
    out[:-2, :] -= v[2:, :]
    out[:, 2:] -= v[:, :-2]
    out[:, :-2] -= v[:, 2:]
    return out / (12.0 * h * h)


def laplacian4(u: Field) -> Field:
    return Field(u.grid, laplacian4_array(u.values, u.grid.h))


def laplacian_of_order(order: int):
    if order == 2:
        return laplacian_array
    if order == 4:
        return laplacian4_array
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def kinetic_energy_array(v: np.ndarray) -> float:
    # every interior edge once, plus one edge to the zero ghost per boundary side
    s = np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2)
    s += np.sum(v[0, :] ** 2) + np.sum(v[-1, :] ** 2) + np.sum(v[:, 0] ** 2) + np.sum(v[:, -1] ** 2)
    return float(s)


def kinetic_energy(u: Field) -> float:
    """Discrete Dirichlet energy, sum of squared differences over all edges.

    Equals ``integrate(u * -laplacian(u))`` up to rounding.
    """
    return kinetic_energy_array(u.values)


def kinetic_energy4_array(v: np.ndarray, h: float) -> float:
    return float(h * h * np.sum(v * -laplacian4_array(v, h)))


def kinetic_energy4(u: Field) -> float:
    """Dirichlet energy of the fourth-order stencil, ``integrate(u * -laplacian4(u))``."""
    return kinetic_energy4_array(u.values, u.grid.h)


def kinetic_of_order(v: np.ndarray, h: float, order: int) -> float:
    if order == 2:
        return kinetic_energy_array(v)
    if order == 4:
        return kinetic_energy4_array(v, h)
    raise ValueError(f"stencil order must be 2 or 4, got {order}")


def star_weight(grid: GridSpec) -> np.ndarray:
    return np.log1p(grid.radius)


def star_norm_sq(u: Field) -> float:
    """Weighted norm ``int log(1 + |x|) u^2``."""
    return float(u.grid.h ** 2 * np.sum(star_weight(u.grid) * u.values ** 2))


def mass(u: Field) -> float:
    return float(u.grid.h ** 2 * np.sum(u.values ** 2))


def l2_norm(u: Field) -> float:
    return float(np.sqrt(mass(u)))


# lattice symmetries of the square acting on index arrays
def square_symmetries(v: np.ndarray) -> list[np.ndarray]:
    """The 8 images of ``v`` under the dihedral group of the square."""
    out = []
    for k in range(4):
        r = np.rot90(v, k)
        out.append(r)
        out.append(r.T)
    return out


def bilinear(u: Field, xq: np.ndarray, yq: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of ``u`` at arbitrary points.

    Uses the zero ghost ring, so the interpolant decays linearly to zero over
    the half cell outside the outermost centers and vanishes beyond it.
    """
    grid = u.grid
    padded = np.pad(u.values, 1)
    fi = (np.asarray(xq) + grid.L) / grid.h + 0.5  # index into padded array
    fj = (np.asarray(yq) + grid.L) / grid.h + 0.5
    i0 = np.floor(fi).astype(np.int64)
    j0 = np.floor(fj).astype(np.int64)
    wx = fi - i0
    wy = fj - j0
    n = grid.N + 2
    inside = (i0 >= 0) & (i0 < n - 1) & (j0 >= 0) & (j0 < n - 1)
    i0 = np.clip(i0, 0, n - 2)
    j0 = np.clip(j0, 0, n - 2)
    out = (
        padded[i0, j0] * (1 - wx) * (1 - wy)
        + padded[i0 + 1, j0] * wx * (1 - wy)
        + padded[i0, j0 + 1] * (1 - wx) * wy
        + padded[i0 + 1, j0 + 1] * wx * wy
    )
    return np.where(inside, out, 0.0)
