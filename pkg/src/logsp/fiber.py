"""Dilation fibers ``u_t(x) = t^2 u(t x)`` and projection onto ``{J = 0}``.

Along a fiber every energy term scales in closed form, so the whole profile
``h(t) = I(u_t)`` is determined by four integrals of ``u``:

    h(t) = t^4 a/2 + t^2 b/2 + t^4 c/4 - t^4 log(t) b^2/4 - t^(2p-2) d/p

with ``a = int |grad u|^2``, ``b = int u^2``, ``c = V0(u)``, ``d = |u|_p^p``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import Params, parts
from .grid import Field, bilinear


@dataclass(frozen=True)
class Moments:
    a: float
    b: float
    c: float
    d: float
    p: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.d < 0:
            raise ValueError(f"moments a, b, d must be nonnegative: {self}")
        if not self.p > 2:
            raise ValueError(f"exponent p must exceed 2, got {self.p}")

    @property
    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0 and self.d == 0

    def scaled(self, s: float) -> "Moments":
        """Moments of ``u_s`` in terms of those of ``u`` (exact in the continuum)."""
        return Moments(
            a=s ** 4 * self.a,
            b=s ** 2 * self.b,
            c=s ** 4 * (self.c - math.log(s) * self.b ** 2),
            d=s ** (2 * self.p - 2) * self.d,
            p=self.p,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


def moments(u: Field, params: Params) -> Moments:
    return moments_array(u.values, params)


def moments_array(v: np.ndarray, params: Params) -> Moments:
    a, b, c, d, _ = parts(v, params)
    return Moments(a=a, b=b, c=c, d=d, p=params.p)


def _check_t(t) -> None:
    if np.any(np.asarray(t) <= 0):
        raise ValueError("fiber parameter t must be positive")


def fiber_energy(m: Moments, t):
    """``h(t) = I(u_t)`` from the moments of ``u``."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    p = m.p
    t4 = t ** 4
    out = 0.5 * t4 * m.a + 0.5 * t * t * m.b + 0.25 * t4 * m.c - 0.25 * t4 * np.log(t) * m.b ** 2 - t ** (2 * p - 2) * m.d / p
    return out if out.ndim else float(out)


def fiber_derivative(m: Moments, t):
    """``h'(t)``."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    p = m.p
    b2 = m.b ** 2
    t3 = t ** 3
    out = (
        2 * m.a * t3 + m.b * t + m.c * t3 - b2 * t3 * np.log(t) - 0.25 * b2 * t3
        - (2 * p - 2) / p * m.d * t ** (2 * p - 3)
    )
    return out if out.ndim else float(out)


def fiber_J(m: Moments, t):
    """``J(u_t)`` in closed form; equals ``t h'(t)``."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    p = m.p
    b2 = m.b ** 2
    t4 = t ** 4
    out = (
        2 * m.a * t4 + m.b * t * t + m.c * t4 - b2 * t4 * np.log(t) - 0.25 * b2 * t4
        - 2 * (p - 1) / p * m.d * t ** (2 * p - 2)
    )
    return out if out.ndim else float(out)


def _derivative_terms(m: Moments, t: float) -> float:
    p = m.p
    b2 = m.b ** 2
    t3 = t ** 3
    terms = (2 * m.a * t3, m.b * t, m.c * t3, b2 * t3 * math.log(t), 0.25 * b2 * t3,
             (2 * p - 2) / p * m.d * t ** (2 * p - 3))
    return max(abs(x) for x in terms)


def _second_derivative(m: Moments, t: float) -> float:
    p = m.p
    b2 = m.b ** 2
    t2 = t * t
    return (
        6 * m.a * t2 + m.b + 3 * m.c * t2 - 3 * b2 * t2 * math.log(t) - b2 * t2 - 0.75 * b2 * t2
        - (2 * p - 2) * (2 * p - 3) / p * m.d * t ** (2 * p - 4)
    )


class FiberError(ValueError):
    pass


def find_root(m: Moments, lo: float, hi: float, bisections: int = 80) -> float:
    """Root of ``h'`` inside a sign-change bracket with ``h'(lo) > 0 > h'(hi)``."""
    flo = fiber_derivative(m, lo)
    fhi = fiber_derivative(m, hi)
    if fhi == 0 and flo > 0:
        return hi
    if not (flo > 0 > fhi):
        raise FiberError(f"[{lo}, {hi}] does not bracket a + to - sign change of h'")
    for _ in range(bisections):
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        fm = fiber_derivative(m, mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        else:
            return mid
    t = math.sqrt(lo * hi)
    # Newton polish, kept only while it stays in the bracket and improves
    for _ in range(4):
        f = fiber_derivative(m, t)
        if abs(f) <= 1e-14 * _derivative_terms(m, t):
            break
        df = _second_derivative(m, t)
        if df == 0:
            break
        tn = t - f / df
        if not (lo <= tn <= hi) or abs(fiber_derivative(m, tn)) >= abs(f):
            break
        t = tn
    return t


def project_to_manifold(m: Moments) -> float:
    """The unique ``t_u > 0`` with ``J(u_{t_u}) = 0`` (maximizer of ``h``); ``p >= 3`` only."""
    if m.p < 3:
        raise FiberError("unique fiber maximum is only guaranteed for p >= 3; use fiber_scan")
    if m.is_zero or m.b <= 0:
        raise FiberError("cannot project the zero field")
    lo = hi = 1.0
    f1 = fiber_derivative(m, 1.0)
    if f1 == 0:
        return 1.0
    if f1 > 0:
        while fiber_derivative(m, hi) > 0:
            hi *= 2.0
            if hi > 1e100:
                raise FiberError("no sign change of h' found above t = 1")
        lo = hi / 2.0
    else:
        while fiber_derivative(m, lo) <= 0:
            lo /= 2.0
            if lo < 1e-100:
                raise FiberError("no sign change of h' found below t = 1")
        hi = lo * 2.0
    return find_root(m, lo, hi)


@dataclass(frozen=True)
class FiberScan:
    t: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    hprime: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    brackets: list[tuple[float, float]]
    first_negative_t: float | None

    def maxima_brackets(self) -> list[tuple[float, float]]:
        """Brackets where ``h'`` goes from positive to negative (local maxima of ``h``)."""
        return [(a, b) for a, b in self.brackets if fiber_derivative_sign(self, a) > 0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "h", "hprime", "J"])
        for row in zip(self.t, self.h, self.hprime, self.J):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def fiber_derivative_sign(scan: FiberScan, t: float) -> int:
    i = int(np.searchsorted(scan.t, t))
    return int(np.sign(scan.hprime[min(i, len(scan.t) - 1)]))


def fiber_scan(m: Moments, t_min: float = 1e-3, t_max: float = 1e3, samples: int = 2001) -> FiberScan:
    """Sample the fiber on a geometric grid and locate sign changes of ``h'``."""
    if not (0 < t_min < t_max) or samples < 2:
        raise ValueError("need 0 < t_min < t_max and at least two samples")
    t = np.geomspace(t_min, t_max, int(samples))
    h = fiber_energy(m, t)
    hp = fiber_derivative(m, t)
    J = fiber_J(m, t)
    s = np.sign(hp)
    brackets = []
    nz = np.nonzero(s)[0]
    for i0, i1 in zip(nz[:-1], nz[1:]):
        if s[i0] != s[i1]:
            brackets.append((float(t[i0]), float(t[i1])))
    neg = np.nonzero(h < 0)[0]
    first_neg = float(t[neg[0]]) if neg.size else None
    return FiberScan(t=t, h=h, hprime=hp, J=J, brackets=brackets, first_negative_t=first_neg)


def nearest_fiber_maximum(m: Moments, window: float | None = None, samples: int = 2001) -> float | None:
    """Local maximizer of ``h`` whose bracket lies closest to ``t = 1`` (log scale).

    With ``window`` set, only maxima inside ``[1/window, window]`` count.
    Returns ``None`` when there is none.
    """
    if m.p >= 3 and window is None:
        return project_to_manifold(m)
    lo, hi = (1.0 / window, window) if window else (1e-3, 1e3)
    scan = fiber_scan(m, lo, hi, samples)
    best = None
    for a, b in scan.maxima_brackets():
        t = find_root(m, a, b)
        if best is None or abs(math.log(t)) < abs(math.log(best)):
            best = t
    return best


def rescale(u: Field, t: float, order: int = 3) -> Field:
    """``t^2 u(t x)`` resampled on the same grid.

    ``order=3`` uses a cubic spline of the zero-extended samples (error
    ``O(h^4)``); ``order=1`` is bilinear, which preserves positivity but is
    only ``O(h^2)``.
    """
    if not t > 0:
        raise ValueError("scale factor must be positive")
    if order not in (1, 3):
        raise ValueError(f"interpolation order must be 1 or 3, got {order}")
    if t == 1.0:
        return Field(u.grid, u.values.copy())
    X, Y = u.grid.coords
    if order == 1:
        return Field(u.grid, t * t * bilinear(u, t * X, t * Y))
    g = u.grid
    fi = (t * X + g.L) / g.h - 0.5
    fj = (t * Y + g.L) / g.h - 0.5
    vals = ndimage.map_coordinates(u.values, [fi, fj], order=3, mode="grid-constant", cval=0.0)
    return Field(g, t * t * vals)


def fiber_maxima(m: Moments, t_min: float = 1e-3, t_max: float = 1e3, samples: int = 4001) -> list[float]:
    """All local maximizers of ``h`` in ``[t_min, t_max]``, refined by bisection."""
    scan = fiber_scan(m, t_min, t_max, samples)
    return [find_root(m, a, b) for a, b in scan.maxima_brackets()]


def best_fiber_maximum(m: Moments, t_min: float = 1e-3, t_max: float = 1e3, samples: int = 4001) -> float:
    """Maximizer of ``h`` over the scanned range (global fiber maximum)."""
    if m.is_zero or m.b <= 0:
        raise FiberError("cannot scan the fiber of the zero field")
    if m.p >= 3:
        return project_to_manifold(m)
    maxima = fiber_maxima(m, t_min, t_max, samples)
    if not maxima:
        raise FiberError(f"h has no interior maximum in [{t_min}, {t_max}]")
    return max(maxima, key=lambda t: fiber_energy(m, t))
