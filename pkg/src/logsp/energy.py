"""Energy functional, its gradient, and the Pohozaev-type functionals.

All quantities are discrete: the kinetic term is the quadratic form of the
chosen Laplacian stencil, the interaction term is the lattice sum of the log
kernel, so ``euler_gradient`` is the exact gradient of ``I`` as evaluated here.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .grid import Field, GridMismatchError, GridSpec, check_same_grid, kinetic_of_order, laplacian_of_order, star_weight
from .logkernel import DEFAULT_ORIGIN, ORIGIN_RULES, kernel_tables

# algebraic identities between assembled quantities are checked at this level
IDENTITY_RTOL = 1e-10


@dataclass(frozen=True)
class Params:
    """Exponent plus discretization choices.

    ``order`` picks the Laplacian stencil (2: five-point, 4: fourth-order
    cross); ``origin`` picks the log-kernel origin weight.
    """

    p: float
    grid: GridSpec
    order: int = 4
    origin: str = DEFAULT_ORIGIN

    def __post_init__(self):
        if not (np.isfinite(self.p) and self.p > 2):
            raise ValueError(f"exponent p must exceed 2, got {self.p}")
        if self.order not in (2, 4):
            raise ValueError(f"stencil order must be 2 or 4, got {self.order}")
        if self.origin not in ORIGIN_RULES:
            raise ValueError(f"origin rule must be one of {ORIGIN_RULES}, got {self.origin!r}")
        object.__setattr__(self, "p", float(self.p))

    @property
    def p_ge_3(self) -> bool:
        return self.p >= 3

    @property
    def tables(self):
        return kernel_tables(self.grid, self.origin)

    def lap(self, v: np.ndarray) -> np.ndarray:
        return laplacian_of_order(self.order)(v, self.grid.h)

    def kinetic(self, v: np.ndarray) -> float:
        return kinetic_of_order(v, self.grid.h, self.order)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    mass: float
    v0: float
    v1: float
    v2: float
    lp: float
    I: float
    J: float
    P: float
    star_sq: float
    h1_sq: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyBreakdown":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


def _check(u: Field, params: Params) -> None:
    if u.grid != params.grid:
        raise GridMismatchError(f"field grid {u.grid} does not match params grid {params.grid}")


def nonlinearity(v: np.ndarray, p: float) -> np.ndarray:
    """``|u|^(p-2) u`` written as ``sign(u) |u|^(p-1)`` (zero at zero)."""
    if p == 3.0:
        return v * np.abs(v)
    if p == 4.0:
        return v * v * v
    return np.sign(v) * np.abs(v) ** (p - 1)


def functional_I(kinetic, mass, v0, lp, p):
    return 0.5 * kinetic + 0.5 * mass + 0.25 * v0 - lp / p


def functional_J(kinetic, mass, v0, lp, p):
    return 2.0 * kinetic + mass - 2.0 * (p - 1.0) / p * lp + v0 - 0.25 * mass ** 2


def functional_P(mass, v0, lp, p):
    return mass + v0 + 0.25 * mass ** 2 - 2.0 / p * lp


def parts(v: np.ndarray, params: Params) -> tuple[float, float, float, float, np.ndarray]:
    """``(kinetic, mass, v0, lp, w)`` of an array on ``params.grid``."""
    h2 = params.grid.h ** 2
    dens = v * v
    w = params.tables.convolve(dens, "k0")
    return (
        params.kinetic(v),
        float(h2 * np.sum(dens)),
        float(h2 * np.sum(dens * w)),
        float(h2 * np.sum(np.abs(v) ** params.p)),
        w,
    )


def energy(u: Field, params: Params) -> EnergyBreakdown:
    _check(u, params)
    p = params.p
    h2 = u.grid.h ** 2
    dens = u.values ** 2
    tabs = params.tables
    kin, m, c0, lp, _ = parts(u.values, params)
    c1 = float(h2 * np.sum(dens * tabs.convolve(dens, "k1")))
    c2 = float(h2 * np.sum(dens * tabs.convolve(dens, "k2")))
    e = EnergyBreakdown(
        kinetic=kin,
        mass=m,
        v0=c0,
        v1=c1,
        v2=c2,
        lp=lp,
        I=functional_I(kin, m, c0, lp, p),
        J=functional_J(kin, m, c0, lp, p),
        P=functional_P(m, c0, lp, p),
        star_sq=float(h2 * np.sum(star_weight(u.grid) * dens)),
        h1_sq=kin + m,
    )
    check_identities(e, p)
    return e


def energy_I(u: Field, params: Params) -> float:
    """``I`` alone (one convolution)."""
    _check(u, params)
    return energy_I_array(u.values, params)


def energy_I_array(v: np.ndarray, params: Params) -> float:
    kin, m, c0, lp, _ = parts(v, params)
    return float(functional_I(kin, m, c0, lp, params.p))


def gradient_array(v: np.ndarray, params: Params, w: np.ndarray | None = None) -> np.ndarray:
    if w is None:
        w = params.tables.convolve(v * v, "k0")
    return -params.lap(v) + v + w * v - nonlinearity(v, params.p)


def hessian_apply(v: np.ndarray, x: np.ndarray, params: Params, w: np.ndarray | None = None) -> np.ndarray:
    """Second derivative of ``I`` at ``v`` applied to ``x`` (L2 representative)."""
    tabs = params.tables
    if w is None:
        w = tabs.convolve(v * v, "k0")
    p = params.p
    curv = (p - 1.0) * np.abs(v) ** (p - 2.0)
    return -params.lap(x) + x + w * x + 2.0 * tabs.convolve(v * x, "k0") * v - curv * x


def euler_gradient(u: Field, params: Params) -> Field:
    """L2 representative of ``I'(u)``: ``-Lap u + u + w u - |u|^(p-2) u``."""
    _check(u, params)
    return Field(u.grid, gradient_array(u.values, params))


def dirI(u: Field, v: Field, params: Params) -> float:
    """Directional derivative ``I'(u) v``."""
    check_same_grid(u, v)
    _check(u, params)
    h2 = u.grid.h ** 2
    uv = u.values
    w = params.tables.convolve(uv * uv, "k0")
    return float(
        h2 * np.sum(-params.lap(uv) * v.values)
        + h2 * np.sum(uv * v.values)
        + h2 * np.sum(w * uv * v.values)
        - h2 * np.sum(nonlinearity(uv, params.p) * v.values)
    )


def pohozaev(u: Field, params: Params) -> float:
    return energy(u, params).P


def nehari_pohozaev(u: Field, params: Params) -> float:
    return energy(u, params).J


def check_identities(e: EnergyBreakdown, p: float, rtol: float = IDENTITY_RTOL) -> None:
    """Re-assert the definitional relations between the assembled terms."""
    scale = 1.0 + abs(e.kinetic) + abs(e.mass) + abs(e.v1) + abs(e.v2) + abs(e.lp) + e.mass ** 2
    checks = {
        "I": e.I - functional_I(e.kinetic, e.mass, e.v0, e.lp, p),
        "J": e.J - functional_J(e.kinetic, e.mass, e.v0, e.lp, p),
        "P": e.P - functional_P(e.mass, e.v0, e.lp, p),
        "split": e.v1 - e.v2 - e.v0,
        "h1": e.h1_sq - e.kinetic - e.mass,
        "J=2I'(u)u-P": e.J - (2.0 * (e.kinetic + e.mass + e.v0 - e.lp) - e.P),
    }
    bad = {k: v for k, v in checks.items() if abs(v) > rtol * scale}
    if bad:
        raise ArithmeticError(f"energy identities violated: {bad}")
