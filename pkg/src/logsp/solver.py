"""Critical-point search for the planar Schrodinger-Poisson energy.

Two descent strategies share one loop:

* ``fiber``: after each gradient step the iterate is moved along its dilation
  fiber to the fiber maximum, i.e. back onto ``{J = 0}`` (``p >= 3``).
* ``flow``: a damped gradient flow; the fiber correction is only applied when
  a local fiber maximum lies within a narrow window around ``t = 1``, so a
  start inside the basin of zero still collapses (any ``p > 2``).

Both finish with a Newton polish (MINRES on the exact Hessian) because the
critical points are saddle points of ``I``: descent alone stalls at the
discretization-level distance between ``{J = 0}`` and the discrete critical
set.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, minres

from .energy import EnergyBreakdown, Params, energy, energy_I_array, gradient_array, hessian_apply, parts
from .fiber import (
    FiberError,
    Moments,
    best_fiber_maximum,
    fiber_derivative,
    fiber_energy,
    fiber_scan,
    find_root,
    moments_array,
    project_to_manifold,
    rescale,
)
from .grid import Field, GridSpec
from .symmetry import SymmetryGroup, invariance_residual, symmetrize

log = logging.getLogger(__name__)

COLLAPSE_MASS = 1e-8
FLOW_WINDOW = 1.5
SIGN_TOL = 1e-6


class SolverError(RuntimeError):
    pass


class CollapseError(SolverError):
    """The iterate fell into the basin of the trivial solution."""


class ConvergenceError(SolverError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class InitialGuess:
    kind: str = "gaussian"  # gaussian | file | noise
    width: float = 1.0
    amplitude: float = 2.0
    offset: tuple[float, float] = (0.0, 0.0)
    path: str | None = None
    noise: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "file", "noise"):
            raise ValueError(f"unknown initial guess kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file initial guess needs a path")
        if self.width <= 0:
            raise ValueError("initial width must be positive")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-6
    step0: float = 0.1
    backtrack: float = 0.5
    armijo: float = 1e-4
    grow: float = 1.2
    max_step: float = 4.0
    min_step: float = 1e-10
    seed: int = 0
    initial: InitialGuess = field(default_factory=InitialGuess)
    stall_window: int = 10
    stall_ratio: float = 0.99
    polish_switch: float = 1e-3
    newton_iters: int = 30
    newton_rtol: float = 1e-6

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.step0 > 0 and self.armijo > 0):
            raise ValueError("tolerances and steps must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    _INITIAL_KEYS = {
        "initial": "kind",
        "initial_kind": "kind",
        "width": "width",
        "amplitude": "amplitude",
        "noise": "noise",
        "path": "path",
        "initial_file": "path",
    }

    @classmethod
    def from_text(cls, text: str) -> "SolverConfig":
        """Parse ``key = value`` lines (``#`` comments allowed)."""
        top = {f.name: f.type for f in fields(cls) if f.name != "initial"}
        kw: dict = {}
        ini: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lower().replace("-", "_")
            if key in cls._INITIAL_KEYS:
                name = cls._INITIAL_KEYS[key]
                ini[name] = value if name in ("kind", "path") else float(value)
            elif key == "offset":
                x, y = (float(s) for s in value.replace(",", " ").split())
                ini["offset"] = (x, y)
            elif key in top:
                kw[key] = int(value) if top[key] in (int, "int") else float(value)
            else:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if ini:
            kw["initial"] = InitialGuess(**ini)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "SolverConfig":
        return cls.from_text(Path(path).read_text())

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "initial"}
        d["initial"] = dict(self.initial.__dict__)
        return d


@dataclass
class SolveReport:
    field: Field
    breakdown: EnergyBreakdown
    grad_residual: float
    iterations: int
    strategy: str
    group: SymmetryGroup | None
    t_history: list[float]
    I_history: list[float]
    minimax_energy: float
    sign_definite: bool
    symmetry_residual: float
    converged: bool = True
    label: str = "ground state"
    J_history: list[float] = field(default_factory=list)
    P_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    polish_iterations: int = 0
    interpolation_floor: float = 0.0
    message: str = ""

    def to_dict(self, field_file: str | None = None) -> dict:
        return {
            "field_file": field_file,
            "grid": {"L": self.field.grid.L, "N": self.field.grid.N},
            "breakdown": self.breakdown.to_dict(),
            "grad_residual": self.grad_residual,
            "iterations": self.iterations,
            "polish_iterations": self.polish_iterations,
            "strategy": self.strategy,
            "group": str(self.group) if self.group else None,
            "label": self.label,
            "converged": self.converged,
            "minimax_energy": self.minimax_energy,
            "sign_definite": self.sign_definite,
            "symmetry_residual": self.symmetry_residual,
            "interpolation_floor": self.interpolation_floor,
            "t_history": list(self.t_history),
            "I_history": list(self.I_history),
            "J_history": list(self.J_history),
            "P_history": list(self.P_history),
            "residual_history": list(self.residual_history),
            "message": self.message,
        }


# -- helpers ------------------------------------------------------------------

class _Preconditioner:
    """``(1 - Lap)^-1`` for the five-point Dirichlet Laplacian via DST-I."""

    def __init__(self, grid: GridSpec):
        n = grid.N
        k = np.arange(1, n + 1)
        lam = (4.0 / grid.h ** 2) * np.sin(np.pi * k / (2 * (n + 1))) ** 2
        self.denom = 1.0 + lam[:, None] + lam[None, :]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return sfft.idstn(sfft.dstn(r, type=1, norm="ortho") / self.denom, type=1, norm="ortho")


def h1_norm(v: np.ndarray, params: Params) -> float:
    return math.sqrt(params.kinetic(v) + params.grid.h ** 2 * float(np.sum(v * v)))


def grad_residual(u: Field, params: Params) -> float:
    """``||I'(u)||_2 / ||u||_H1`` with the L2 gradient representative."""
    v = u.values
    g = gradient_array(v, params)
    return _residual(v, g, params)


def _residual(v: np.ndarray, g: np.ndarray, params: Params) -> float:
    norm = h1_norm(v, params)
    if norm == 0:
        return math.inf
    return params.grid.h * float(np.sqrt(np.sum(g * g))) / norm


def _mass(v: np.ndarray, grid: GridSpec) -> float:
    return grid.h ** 2 * float(np.sum(v * v))


def seed_field(grid: GridSpec, group: SymmetryGroup | None, guess: InitialGuess, seed: int = 0) -> Field:
    """Initial data of the requested kind, made compatible with ``group``."""
    if guess.kind == "file":
        from .io import read_field

        u = read_field(guess.path)
        if u.grid != grid:
            raise ValueError(f"initial field grid {u.grid} does not match {grid}")
        return symmetrize(u, group) if group else u
    x0, y0 = guess.offset
    X, Y = grid.coords
    xs, ys = (X - x0) / guess.width, (Y - y0) / guess.width
    base = np.exp(-(xs ** 2 + ys ** 2) / 2)
    if group is not None and group.kind == "oddeven":
        harmonic = xs
    elif group is not None and group.kind == "dihedral":
        # r^k exp(-k r^2 / 2) peaks on the ring r = width for every k
        base = base ** group.k
        harmonic = np.real((xs + 1j * ys) ** group.k)
    else:
        harmonic = 1.0
    v = harmonic * base
    v = guess.amplitude * v / np.max(np.abs(v))
    if guess.kind == "noise" or guess.noise > 0:
        rng = np.random.default_rng(seed)
        v = v + guess.noise * guess.amplitude * rng.standard_normal(v.shape) * base
    u = Field(grid, v)
    return symmetrize(u, group) if group else u


def _sym(v: np.ndarray, grid: GridSpec, group: SymmetryGroup | None, exact_only: bool = False) -> np.ndarray:
    if group is None:
        return v
    return symmetrize(Field(grid, v), group, exact_only=exact_only).values


def minimax_energy(u: Field, params: Params) -> float:
    """``sup_t I(u_t)`` from the fiber moments of ``u``."""
    m = moments_array(u.values, params)
    if m.is_zero or m.b <= 0:
        raise ValueError("minimax energy of the zero field is undefined")
    if params.p >= 3:
        return float(fiber_energy(m, project_to_manifold(m)))
    scan = fiber_scan(m, 1e-3, 1e3, 4001)
    best = float(np.max(scan.h))
    for a, b in scan.maxima_brackets():
        best = max(best, float(fiber_energy(m, find_root(m, a, b))))
    return best


def _window_maximum(m: Moments, window: float) -> float | None:
    """Fiber maximizer nearest to ``t = 1`` inside ``[1/window, window]``, if any."""
    if m.b <= 0:
        return None
    lo, hi = 1.0 / window, window
    if m.p >= 3:
        # h' has one sign change; it lies in the window iff the ends disagree
        if fiber_derivative(m, lo) > 0 > fiber_derivative(m, hi):
            return find_root(m, lo, hi)
        return None
    scan = fiber_scan(m, lo, hi, 201)
    best = None
    for a, b in scan.maxima_brackets():
        t = find_root(m, a, b)
        if best is None or abs(math.log(t)) < abs(math.log(best)):
            best = t
    return best


def fit_amplitude(v: np.ndarray, params: Params, window: float = 1e2, max_steps: int = 200) -> np.ndarray:
    """Rescale the amplitude of ``v`` until its fiber maximum lies in ``[1/window, window]``.

    For p >= 3 the fiber root always exists, but for a narrow, weak seed it
    can sit so far out (t ~ e^200 and beyond) that evaluating the fiber
    overflows. Raising the amplitude pulls the root in since the mass and
    L^p terms grow faster than the kinetic one.
    """
    v = np.array(v, dtype=float)
    for _ in range(max_steps):
        m = moments_array(v, params)
        if m.is_zero or m.b <= 0:
            break
        if fiber_derivative(m, window) > 0:
            v *= 2.0
        elif fiber_derivative(m, 1.0 / window) <= 0:
            v *= 0.5
        else:
            break
    return v


# -- core loop ----------------------------------------------------------------

@dataclass
class _State:
    v: np.ndarray
    I: float
    t: float = 1.0


class _Solver:
    def __init__(self, params: Params, cfg: SolverConfig, group: SymmetryGroup | None, strategy: str):
        self.params = params
        self.cfg = cfg
        self.group = group
        self.strategy = strategy
        self.grid = params.grid
        self.prec = _Preconditioner(self.grid)
        self.t_hist: list[float] = []
        self.I_hist: list[float] = []
        self.J_hist: list[float] = []
        self.P_hist: list[float] = []
        self.res_hist: list[float] = []

    # fiber correction applied to every trial point
    def correct(self, v: np.ndarray) -> tuple[np.ndarray, float]:
        if _mass(v, self.grid) < COLLAPSE_MASS:
            raise CollapseError("iterate mass fell below the collapse floor")
        m = moments_array(v, self.params)
        if self.strategy == "fiber":
            t = project_to_manifold(m)
        else:
            t = _window_maximum(m, FLOW_WINDOW)
        if t is None or t == 1.0:
            return v, 1.0
        w = rescale(Field(self.grid, v), t).values
        return _sym(w, self.grid, self.group), t

    def _record(self, v: np.ndarray, res: float) -> None:
        kin, m, c0, lp, _ = parts(v, self.params)
        p = self.params.p
        self.J_hist.append(2 * kin + m - 2 * (p - 1) / p * lp + c0 - 0.25 * m * m)
        self.P_hist.append(m + c0 + 0.25 * m * m - 2 / p * lp)
        self.res_hist.append(res)

    def descend(self, v: np.ndarray) -> tuple[np.ndarray, int, float]:
        cfg = self.cfg
        v, t = self.correct(_sym(v, self.grid, self.group))
        state = _State(v, energy_I_array(v, self.params), t)
        self.t_hist.append(t)
        self.I_hist.append(state.I)
        sigma = cfg.step0
        res = math.inf
        it = 0
        for it in range(1, cfg.max_iters + 1):
            g = gradient_array(state.v, self.params)
            res = _residual(state.v, g, self.params)
            self._record(state.v, res)
            if res <= cfg.grad_tol:
                break
            if self._stalled(res):
                log.debug("descent stalled at residual %.3e after %d iterations", res, it)
                break
            d = _sym(self.prec(g), self.grid, self.group)
            slope = self.grid.h ** 2 * float(np.sum(g * d))
            if slope <= 0:
                break
            accepted = False
            while sigma >= cfg.min_step:
                trial, t = self.correct(state.v - sigma * d)
                I_trial = energy_I_array(trial, self.params)
                if I_trial <= state.I - cfg.armijo * sigma * slope:
                    state = _State(trial, I_trial, t)
                    accepted = True
                    break
                sigma *= cfg.backtrack
            if not accepted:
                log.debug("line search failed at residual %.3e", res)
                break
            self.t_hist.append(state.t)
            self.I_hist.append(state.I)
            sigma = min(sigma * cfg.grow, cfg.max_step)
        return state.v, it, res

    def _stalled(self, res: float) -> bool:
        w = self.cfg.stall_window
        h = self.res_hist
        if res <= self.cfg.polish_switch and len(h) > w and res > self.cfg.stall_ratio * h[-1 - w]:
            return True
        return False

    def polish(self, v: np.ndarray) -> tuple[np.ndarray, int, float]:
        """Newton iteration on ``I'(u) = 0`` restricted to the lattice-exact symmetries."""
        cfg = self.cfg
        params = self.params
        n = self.grid.N
        exact = self.group

        def sym(x):
            return _sym(x, self.grid, exact, exact_only=True)

        v = sym(v)
        g = gradient_array(v, params)
        res = _residual(v, g, params)
        it = 0
        for it in range(1, cfg.newton_iters + 1):
            if res <= cfg.grad_tol:
                return v, it - 1, res
            w = params.tables.convolve(v * v, "k0")
            op = LinearOperator(
                (n * n, n * n),
                matvec=lambda x: hessian_apply(v, x.reshape(n, n), params, w).ravel(),
                dtype=float,
            )
            pre = LinearOperator((n * n, n * n), matvec=lambda x: self.prec(x.reshape(n, n)).ravel(), dtype=float)
            step, _ = minres(op, -g.ravel(), M=pre, rtol=cfg.newton_rtol, maxiter=2000)
            step = sym(step.reshape(n, n))
            s = 1.0
            while s > 1e-4:
                trial = v + s * step
                g_trial = gradient_array(trial, params)
                r_trial = _residual(trial, g_trial, params)
                if r_trial < res:
                    break
                s *= 0.5
            else:
                log.debug("Newton line search failed at residual %.3e", res)
                return v, it, res
            if _mass(trial, self.grid) < COLLAPSE_MASS:
                raise CollapseError("Newton iterate collapsed to zero")
            v, g, res = trial, g_trial, r_trial
            self._record(v, res)
        return v, it, res

    def run(self, v0: np.ndarray) -> SolveReport:
        v, iters, res = self.descend(v0)
        polish_iters = 0
        if res > self.cfg.grad_tol:
            v, polish_iters, res = self.polish(v)
        return self._report(v, iters, polish_iters, res)

    def _report(self, v: np.ndarray, iters: int, polish_iters: int, res: float) -> SolveReport:
        params = self.params
        u = Field(self.grid, v)
        e = energy(u, params)
        try:
            mm = minimax_energy(u, params)
        except (FiberError, ValueError):
            mm = math.nan
        vmin, vmax = float(v.min()), float(v.max())
        peak = max(abs(vmin), abs(vmax))
        sign_definite = vmin * vmax >= -SIGN_TOL * peak ** 2
        sym_res = invariance_residual(u, self.group) if self.group else 0.0
        floor = 0.0
        if self.group is not None and not self.group.lattice_exact:
            floor = invariance_residual(symmetrize(u, self.group), self.group)
        converged = res <= self.cfg.grad_tol
        label = "ground state" if params.p >= 3 else "critical point candidate"
        if self.group is not None:
            label = f"{self.group}-symmetric " + ("minimizer" if params.p >= 3 else "critical point candidate")
        return SolveReport(
            field=u,
            breakdown=e,
            grad_residual=res,
            iterations=iters,
            strategy="fiber-projected" if self.strategy == "fiber" else "damped-flow",
            group=self.group,
            t_history=self.t_hist,
            I_history=self.I_hist,
            minimax_energy=mm,
            sign_definite=bool(sign_definite),
            symmetry_residual=sym_res,
            converged=converged,
            label=label,
            J_history=self.J_hist,
            P_history=self.P_hist,
            residual_history=self.res_hist,
            polish_iterations=polish_iters,
            interpolation_floor=floor,
            message="" if converged else f"residual {res:.3e} above tolerance {self.cfg.grad_tol:.1e}",
        )


def _finish(report: SolveReport, strict: bool) -> SolveReport:
    if strict and not report.converged:
        raise ConvergenceError(report.message, report)
    return report


def solve_fiber_projected(
    params: Params,
    cfg: SolverConfig | None = None,
    group: SymmetryGroup | None = None,
    u0: Field | None = None,
    strict: bool = False,
) -> SolveReport:
    """Minimize ``I`` on ``{J = 0}`` (optionally inside ``X_G``); ``p >= 3``."""
    if params.p < 3:
        raise ValueError("fiber-projected descent needs p >= 3; use the damped flow for 2 < p < 3")
    cfg = cfg or SolverConfig()
    if u0 is None:
        u0 = seed_field(params.grid, group, cfg.initial, cfg.seed)
    if u0.grid != params.grid:
        raise ValueError("initial field lives on a different grid")
    if _mass(u0.values, params.grid) < COLLAPSE_MASS:
        raise CollapseError("initial data is (numerically) zero")
    rep = _Solver(params, cfg, group, "fiber").run(fit_amplitude(u0.values, params))
    return _finish(rep, strict)


def prescale_to_fiber_maximum(u: Field, params: Params) -> Field:
    """Move ``u`` along its fiber to the global fiber maximum in ``[1e-3, 1e3]``."""
    t = best_fiber_maximum(moments_array(u.values, params))
    return rescale(u, t)


def solve_damped_flow(
    params: Params,
    cfg: SolverConfig | None = None,
    group: SymmetryGroup | None = None,
    u0: Field | None = None,
    strict: bool = False,
) -> SolveReport:
    """Damped gradient flow with J-window correction and Newton polish; any ``p > 2``."""
    cfg = cfg or SolverConfig()
    if u0 is None:
        u0 = prescale_to_fiber_maximum(seed_field(params.grid, group, cfg.initial, cfg.seed), params)
        if group is not None:
            u0 = symmetrize(u0, group)
    if u0.grid != params.grid:
        raise ValueError("initial field lives on a different grid")
    if _mass(u0.values, params.grid) < COLLAPSE_MASS:
        raise CollapseError("initial data is (numerically) zero")
    rep = _Solver(params, cfg, group, "flow").run(u0.values)
    if _mass(rep.field.values, params.grid) < 1e3 * COLLAPSE_MASS:
        raise CollapseError("flow converged to the trivial solution")
    return _finish(rep, strict)


def solve(params: Params, cfg: SolverConfig | None = None, group: SymmetryGroup | None = None,
          strategy: str = "fiber", u0: Field | None = None, strict: bool = False) -> SolveReport:
    if strategy == "fiber":
        return solve_fiber_projected(params, cfg, group, u0, strict)
    if strategy == "flow":
        return solve_damped_flow(params, cfg, group, u0, strict)
    raise ValueError(f"unknown strategy {strategy!r}")


# -- dihedral ladder ----------------------------------------------------------

LADDER_SLACK = 1e-6
NONRADIAL_THRESHOLD = 0.1


class LadderError(SolverError):
    def __init__(self, message: str, reports: list[SolveReport]):
        super().__init__(message)
        self.reports = reports


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LOGSP_THREADS", "1")))
    except ValueError:
        return 1


def ladder_checks(reports: list[SolveReport]) -> dict[str, bool]:
    from .symmetry import sign_change_certificate

    energies = [r.breakdown.I for r in reports]
    radial = SymmetryGroup.radial()
    return {
        "converged": all(r.converged for r in reports),
        "nondecreasing": all(b >= a - LADDER_SLACK for a, b in zip(energies, energies[1:])),
        "sign_changing": all(sign_change_certificate(r.field, r.group).both_signs for r in reports),
        "nonradial": all(invariance_residual(r.field, radial) > NONRADIAL_THRESHOLD for r in reports),
    }


def dihedral_ladder(params: Params, cfg: SolverConfig | None = None, n_max: int = 2) -> list[SolveReport]:
    """Symmetric solutions for ``Dihedral(3^n)``, ``n = 1 .. n_max``."""
    from .symmetry import ladder_groups

    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    cfg = cfg or SolverConfig()
    groups = ladder_groups(n_max)

    def one(g: SymmetryGroup) -> SolveReport:
        if params.p >= 3:
            return solve_fiber_projected(params, cfg, g)
        return solve_damped_flow(params, cfg, g)

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(groups))) as pool:
        reports = list(pool.map(one, groups))
    checks = ladder_checks(reports)
    if not all(checks.values()):
        failed = ", ".join(k for k, ok in checks.items() if not ok)
        raise LadderError(f"ladder checks failed: {failed}", reports)
    return reports


__all__ = [
    "CollapseError",
    "ConvergenceError",
    "InitialGuess",
    "LadderError",
    "SolveReport",
    "SolverConfig",
    "SolverError",
    "dihedral_ladder",
    "grad_residual",
    "ladder_checks",
    "minimax_energy",
    "prescale_to_fiber_maximum",
    "seed_field",
    "solve",
    "solve_damped_flow",
    "solve_fiber_projected",
]
