"""Signed orthogonal group actions ``(A * u)(x) = tau(A) u(A^-1 x)``.

Three families are supported: all of O(2) with trivial sign (radial
functions), the Klein four-group of coordinate reflections with sign -1 on
the reflection ``x1 -> -x1``, and the cyclic group of order ``2k`` generated
by the ``pi/k`` rotation with alternating sign.

Elements that map the cell-centered lattice onto itself (coordinate
reflections, quarter turns) act exactly by index permutation; every other
rotation is applied by cubic-spline interpolation of the zero-extended field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Field, bilinear

RADIAL = "radial"
ODDEVEN = "oddeven"
DIHEDRAL = "dihedral"

NORM_FLOOR = 1e-30
SIGN_BAND_THETA = 1e-3


@dataclass(frozen=True)
class Element:
    matrix: tuple[tuple[float, float], tuple[float, float]]
    tau: int
    name: str

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    @property
    def lattice_exact(self) -> bool:
        return all(x in (-1.0, 0.0, 1.0) for row in self.matrix for x in row)


def _snap(x: float) -> float:
    r = round(x)
    return float(r) if abs(x - r) < 1e-12 else x


def rotation(angle: float) -> tuple[tuple[float, float], tuple[float, float]]:
    c, s = _snap(math.cos(angle)), _snap(math.sin(angle))
    return ((c, -s), (s, c))


REFLECT_X1 = ((-1.0, 0.0), (0.0, 1.0))
REFLECT_X2 = ((1.0, 0.0), (0.0, -1.0))
IDENTITY = ((1.0, 0.0), (0.0, 1.0))
MINUS_ID = ((-1.0, 0.0), (0.0, -1.0))


@dataclass(frozen=True)
class SymmetryGroup:
    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in (RADIAL, ODDEVEN, DIHEDRAL):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        if self.kind == DIHEDRAL and (int(self.k) != self.k or self.k < 1):
            raise ValueError(f"dihedral order parameter must be a positive integer, got {self.k!r}")

    @classmethod
    def radial(cls) -> "SymmetryGroup":
        return cls(RADIAL)

    @classmethod
    def oddeven(cls) -> "SymmetryGroup":
        return cls(ODDEVEN)

    @classmethod
    def dihedral(cls, k: int) -> "SymmetryGroup":
        return cls(DIHEDRAL, int(k))

    @classmethod
    def parse(cls, text: str) -> "SymmetryGroup":
        """Parse ``radial``, ``oddeven`` or ``dihedral:<k>``."""
        s = text.strip().lower()
        if s == RADIAL:
            return cls.radial()
        if s == ODDEVEN:
            return cls.oddeven()
        if s.startswith(DIHEDRAL + ":"):
            try:
                k = int(s.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad dihedral group string {text!r}") from None
            return cls.dihedral(k)
        raise ValueError(f"unknown group {text!r}; use radial, oddeven or dihedral:<k>")

    def __str__(self) -> str:
        return f"{DIHEDRAL}:{self.k}" if self.kind == DIHEDRAL else self.kind

    @property
    def order(self) -> int | None:
        return {RADIAL: None, ODDEVEN: 4}.get(self.kind, 2 * self.k)

    def elements(self) -> list[Element]:
        """All elements of a finite group; for O(2) its lattice-exact part."""
        if self.kind == ODDEVEN:
            return [
                Element(IDENTITY, 1, "id"),
                Element(MINUS_ID, -1, "-id"),
                Element(REFLECT_X1, -1, "A1"),
                Element(REFLECT_X2, 1, "A2"),
            ]
        if self.kind == DIHEDRAL:
            return [
                Element(rotation(j * math.pi / self.k), (-1) ** j, f"A^{j}")
                for j in range(2 * self.k)
            ]
        out = []
        for j in range(4):
            r = rotation(j * math.pi / 2)
            out.append(Element(r, 1, f"R{90 * j}"))
            refl = tuple(tuple(float(x) for x in row) for row in (np.array(r) @ np.array(REFLECT_X1)))
            out.append(Element(refl, 1, f"R{90 * j}A1"))
        return out

    def generators(self) -> list[Element]:
        if self.kind == ODDEVEN:
            return [Element(REFLECT_X1, -1, "A1"), Element(REFLECT_X2, 1, "A2")]
        if self.kind == DIHEDRAL:
            return [Element(rotation(math.pi / self.k), -1, "A")]
        return [Element(rotation(math.pi / 2), 1, "R90"), Element(REFLECT_X1, 1, "A1")]

    def negative_elements(self) -> list[Element]:
        return [e for e in self.elements() if e.tau < 0]

    @property
    def lattice_exact(self) -> bool:
        return self.kind != RADIAL and all(e.lattice_exact for e in self.elements())

    def exact_elements(self) -> list[Element]:
        """The lattice-exact subgroup (always contains the identity)."""
        return [e for e in self.elements() if e.lattice_exact]


def ladder_groups(n_max: int) -> list[SymmetryGroup]:
    """``Dihedral(3^n)`` for ``n = 1 .. n_max``, each subgroup-nested in the next."""
    return [SymmetryGroup.dihedral(3 ** n) for n in range(1, n_max + 1)]


def _lattice_map(v: np.ndarray, binv: np.ndarray) -> np.ndarray:
    n = v.shape[0]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    idx = []
    for row in binv:
        if row[0] != 0:
            idx.append(ii if row[0] > 0 else n - 1 - ii)
        else:
            idx.append(jj if row[1] > 0 else n - 1 - jj)
    return v[idx[0], idx[1]]


def _spline_sample(coeffs: np.ndarray, grid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    fi = (xs + grid.L) / grid.h - 0.5
    fj = (ys + grid.L) / grid.h - 0.5
    return ndimage.map_coordinates(coeffs, [fi, fj], order=3, mode="grid-constant", cval=0.0, prefilter=False)


def _spline_coeffs(v: np.ndarray) -> np.ndarray:
    return ndimage.spline_filter(v, order=3, mode="grid-constant")


def act_array(u: Field, e: Element, order: int = 3, coeffs: np.ndarray | None = None) -> np.ndarray:
    """Values of ``tau(A) u(A^-1 x)`` at the nodes.

    Lattice-exact elements permute indices; other rotations resample with a
    cubic spline (``order=3``) or bilinearly (``order=1``).
    """
    binv = e.array.T  # orthogonal
    if e.lattice_exact:
        out = _lattice_map(u.values, np.rint(binv).astype(int))
    else:
        X, Y = u.grid.coords
        xs = binv[0, 0] * X + binv[0, 1] * Y
        ys = binv[1, 0] * X + binv[1, 1] * Y
        if order == 1:
            out = bilinear(u, xs, ys)
        else:
            if coeffs is None:
                coeffs = _spline_coeffs(u.values)
            out = _spline_sample(coeffs, u.grid, xs, ys)
    return e.tau * out


def act(u: Field, e: Element, order: int = 3) -> Field:
    return Field(u.grid, act_array(u, e, order))


def radial_average(u: Field, angles: int | None = None) -> Field:
    """Angular mean on circles (``4N`` angles), linearly interpolated in radius."""
    grid = u.grid
    n_ang = angles or 4 * grid.N
    dr = grid.h / 2
    r_max = float(grid.radius.max())
    radii = np.arange(0.0, r_max + 2 * dr, dr)
    theta = 2 * np.pi * np.arange(n_ang) / n_ang
    xs = radii[:, None] * np.cos(theta)[None, :]
    ys = radii[:, None] * np.sin(theta)[None, :]
    profile = bilinear(u, xs, ys).mean(axis=1)
    return Field(grid, np.interp(grid.radius, radii, profile))


def exact_factors(g: SymmetryGroup) -> list[Element]:
    """Elements ``B_1 .. B_m`` with ``prod (1 + tau(B_i) B_i) / 2`` equal to the
    average over the lattice-exact subgroup."""
    r180 = rotation(math.pi)
    r90 = rotation(math.pi / 2)
    if g.kind == ODDEVEN:
        return [Element(REFLECT_X1, -1, "A1"), Element(REFLECT_X2, 1, "A2")]
    if g.kind == RADIAL:
        return [Element(r180, 1, "R180"), Element(r90, 1, "R90"), Element(REFLECT_X1, 1, "A1")]
    k = g.k
    if k % 2:
        return [Element(r180, -1, f"A^{k}")]
    return [Element(r180, 1, f"A^{k}"), Element(r90, (-1) ** (k // 2), f"A^{k // 2}")]


def _chain_average(v: np.ndarray, grid, factors: list[Element]) -> np.ndarray:
    for e in factors:
        v = 0.5 * (v + act_array(Field(grid, v), e))
    return v


def symmetrize(u: Field, g: SymmetryGroup, exact_only: bool = False) -> Field:
    """Group average ``(1/|G|) sum_A tau(A) u(A^-1 x)``.

    The lattice-exact part is applied as a chain of two-element averages,
    which leaves fixed points bit-for-bit unchanged; for the coordinate
    reflections the result is also exactly symmetric.  Interpolated rotations
    are averaged as an orbit sum.  With ``exact_only`` only the lattice-exact
    subgroup is used.
    """
    if g.kind == RADIAL and not exact_only:
        return radial_average(u)
    if exact_only or g.lattice_exact:
        return Field(u.grid, _chain_average(u.values, u.grid, exact_factors(g)))
    acc = np.zeros(u.grid.shape)
    elems = g.elements()
    coeffs = _spline_coeffs(u.values)
    for e in elems:
        acc += act_array(u, e, coeffs=coeffs)
    return Field(u.grid, acc / len(elems))


def invariance_residual(u: Field, g: SymmetryGroup) -> float:
    """``max_A ||A * u - u||_2 / ||u||_2`` over the generators of ``g``.

    For O(2) only the lattice-exact generators are used (quarter turn and
    reflection), so interpolation error does not enter.
    """
    norm = max(float(np.sqrt(np.sum(u.values ** 2))), NORM_FLOOR)
    res = 0.0
    for e in g.generators():
        d = act_array(u, e) - u.values
        res = max(res, float(np.sqrt(np.sum(d * d))) / norm)
    return res


def radial_deviation(u: Field) -> float:
    """``||u - radial_average(u)|| / ||u||``; sees non-lattice anisotropy too."""
    norm = max(float(np.sqrt(np.sum(u.values ** 2))), NORM_FLOOR)
    d = u.values - radial_average(u).values
    return float(np.sqrt(np.sum(d * d))) / norm


@dataclass(frozen=True)
class SignChangeReport:
    min: float
    max: float
    both_signs: bool
    element: str
    fixed_set: str
    fixed_set_max_rel: float
    vanishing_fraction: float
    vanishing_measure: float
    theta: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _fixed_set_samples(e: Element, grid) -> tuple[str, np.ndarray, np.ndarray, float]:
    """Points of ``{x : A x = x}`` inside the domain, with their spacing."""
    a = e.array
    w, vecs = np.linalg.eig(a)
    ones = np.isclose(w, 1.0)
    if not ones.any():
        return "point", np.zeros(1), np.zeros(1), 0.0
    direction = np.real(vecs[:, np.argmax(ones)])
    direction = direction / np.linalg.norm(direction)
    s = grid.axis
    return "line", s * direction[0], s * direction[1], grid.h


def sign_change_certificate(u: Field, g: SymmetryGroup, theta: float = SIGN_BAND_THETA) -> SignChangeReport:
    """Check that ``u`` changes sign and vanishes where a sign-reversing element fixes points."""
    neg = g.negative_elements()
    if not neg:
        raise ValueError(f"group {g} has no element with tau = -1")
    # prefer an element with a line of fixed points (a reflection)
    e = max(neg, key=lambda el: np.isclose(np.linalg.eigvals(el.array), 1.0).sum())
    kind, xs, ys, spacing = _fixed_set_samples(e, u.grid)
    vals = bilinear(u, xs, ys)
    umax = float(np.max(np.abs(u.values)))
    scale = max(umax, NORM_FLOOR)
    small = np.abs(vals) < theta * scale
    vmin, vmax = float(u.values.min()), float(u.values.max())
    tiny = 1e-12 * scale
    return SignChangeReport(
        min=vmin,
        max=vmax,
        both_signs=bool(vmin < -tiny and vmax > tiny),
        element=e.name,
        fixed_set=kind,
        fixed_set_max_rel=float(np.max(np.abs(vals)) / scale),
        vanishing_fraction=float(np.mean(small)),
        vanishing_measure=float(np.sum(small) * spacing) if kind == "line" else float(np.sum(small)),
        theta=theta,
    )
