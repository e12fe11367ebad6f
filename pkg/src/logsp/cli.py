"""``logsp`` command line: solve, verify, fiber-scan, ladder, convolve-test.

Exit codes: 0 success, 1 usage or input error, 2 non-convergence,
3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .energy import Params, energy, gradient_array
from .fiber import Moments, fiber_scan, moments
from .grid import Field, GridSpec
from .io import FieldFormatError, RunManifest, dumps, read_field, write_field, write_json
from .logkernel import DEFAULT_ORIGIN, ORIGIN_RULES, direct_log_potential, kernel_tables, log_potential, potential_asymptotics_residual
from .solver import (
    CollapseError,
    LadderError,
    SolverConfig,
    _residual,
    dihedral_ladder,
    ladder_checks,
    solve,
)
from .symmetry import SymmetryGroup

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NONCONVERGED = 2
EXIT_VERIFY = 3

CONVOLVE_MAX_N = 64
CONVOLVE_TOL = 1e-10

log = logging.getLogger("logsp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; usage errors here are status 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_discretization(p: argparse.ArgumentParser, L: float = 12.0, N: int = 256) -> None:
    p.add_argument("--L", type=float, default=L, help="half width of the square domain")
    p.add_argument("--N", type=int, default=N, help="points per side (even)")
    p.add_argument("--stencil", type=int, choices=(2, 4), default=4, help="Laplacian order")
    p.add_argument("--origin-rule", choices=ORIGIN_RULES, default=DEFAULT_ORIGIN)


def _params(args, grid: GridSpec | None = None) -> Params:
    grid = grid or GridSpec(args.L, args.N)
    return Params(args.p, grid, order=args.stencil, origin=args.origin_rule)


def _config(args) -> SolverConfig:
    if getattr(args, "config", None):
        try:
            return SolverConfig.from_file(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    return SolverConfig()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_dict(params: Params) -> dict:
    return {"p": params.p, "L": params.grid.L, "N": params.grid.N, "stencil": params.order, "origin": params.origin}


# -- solve -------------------------------------------------------------------

def cmd_solve(args) -> int:
    if not args.p > 2:
        raise UsageError(f"p must exceed 2, got {args.p}")
    if args.strategy == "fiber" and args.p < 3:
        raise UsageError("fiber-projected descent needs p >= 3; use --strategy flow for 2 < p < 3")
    params = _params(args)
    cfg = _config(args)
    group = SymmetryGroup.parse(args.group) if args.group and args.group != "none" else None
    u0 = None
    if args.init:
        u0 = read_field(args.init)
    out = _out_dir(args)
    manifest = RunManifest("solve", _params_dict(params), cfg.to_dict(), str(group) if group else None, str(out))
    t0 = time.perf_counter()
    try:
        rep = solve(params, cfg, group, strategy=args.strategy, u0=u0)
    except CollapseError as exc:
        print(f"collapse: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    elapsed = time.perf_counter() - t0
    field_path = write_field(out / "solution.lspf", rep.field)
    report = rep.to_dict(field_file=field_path.name)
    report["elapsed_s"] = elapsed
    report_path = write_json(out / "report.json", report)
    manifest.add(field_path)
    manifest.add(report_path)
    manifest.write()
    b = rep.breakdown
    print(f"I = {b.I:.10g}  J = {b.J:.3e}  P = {b.P:.3e}  residual = {rep.grad_residual:.3e}  "
          f"iterations = {rep.iterations}+{rep.polish_iterations}  ({rep.label})")
    if not rep.converged:
        print(f"not converged: {rep.message}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


# -- verify ------------------------------------------------------------------

def verification_table(u: Field, params: Params, grad_tol: float, identity_tol: float, asym_tol: float) -> list[tuple]:
    """Rows ``(name, value, threshold, passed)``."""
    e = energy(u, params)
    g = gradient_array(u.values, params)
    res = _residual(u.values, g, params)
    asym = potential_asymptotics_residual(u, origin=params.origin)
    rows = [
        ("grad_residual", res, grad_tol),
        ("|P|/(mass+lp)", abs(e.P) / (e.mass + e.lp), identity_tol),
        ("|J|/(kinetic+mass)", abs(e.J) / (e.kinetic + e.mass), identity_tol),
        ("asymptotics/mass", asym / e.mass, asym_tol),
    ]
    return [(name, val, thr, bool(val <= thr)) for name, val, thr in rows]


def cmd_verify(args) -> int:
    try:
        u = read_field(args.file)
    except (OSError, FieldFormatError) as exc:
        raise UsageError(f"cannot read field: {exc}") from exc
    if not np.any(u.values):
        raise UsageError("verify needs a nontrivial field; got the zero field")
    params = _params(args, u.grid)
    rows = verification_table(u, params, args.grad_tol, args.identity_tol, args.asym_tol)
    e = energy(u, params)
    print(f"{'check':<22}{'value':>14}{'threshold':>12}  result")
    for name, val, thr, ok in rows:
        print(f"{name:<22}{val:>14.4e}{thr:>12.1e}  {'pass' if ok else 'FAIL'}")
    print(f"I = {e.I:.10g}  mass = {e.mass:.10g}")
    if args.json:
        write_json(args.json, {
            "breakdown": e.to_dict(),
            "checks": [{"name": n, "value": v, "threshold": t, "passed": ok} for n, v, t, ok in rows],
        })
    return EXIT_OK if all(r[3] for r in rows) else EXIT_VERIFY


# -- fiber-scan ----------------------------------------------------------------

def _scan_moments(args) -> Moments:
    sources = sum(bool(x) for x in (args.gaussian, args.field, args.moments))
    if sources != 1:
        raise UsageError("give exactly one of --gaussian, --field, --moments")
    if args.moments:
        try:
            a, b, c, d = (float(s) for s in args.moments.split(","))
        except ValueError:
            raise UsageError("--moments expects a,b,c,d") from None
        return Moments(a, b, c, d, args.p)
    if args.field:
        u = read_field(args.field)
    else:
        u = GridSpec(args.L, args.N).sample(lambda x, y: np.exp(-(x * x + y * y) / 2))
    return moments(u, _params(args, u.grid))


def cmd_fiber_scan(args) -> int:
    if not args.p > 2:
        raise UsageError(f"p must exceed 2, got {args.p}")
    m = _scan_moments(args)
    scan = fiber_scan(m, args.t_min, args.t_max, args.samples)
    text = scan.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    n_max = len(scan.maxima_brackets())
    print(f"moments a={m.a:.6g} b={m.b:.6g} c={m.c:.6g} d={m.d:.6g}; "
          f"{len(scan.brackets)} sign change(s) of h', {n_max} local maximum bracket(s); "
          f"first t with h<0: {scan.first_negative_t}", file=sys.stderr)
    if args.p >= 3 and len(scan.brackets) != 1 and not m.is_zero:
        print("expected exactly one sign change for p >= 3", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# -- ladder ----------------------------------------------------------------------

def cmd_ladder(args) -> int:
    if not args.p > 2:
        raise UsageError(f"p must exceed 2, got {args.p}")
    if args.nmax < 1:
        raise UsageError("--nmax must be at least 1")
    params = _params(args)
    cfg = _config(args)
    out = _out_dir(args)
    manifest = RunManifest("ladder", _params_dict(params), cfg.to_dict(), f"ladder:{args.nmax}", str(out))
    status = EXIT_OK
    try:
        reports = dihedral_ladder(params, cfg, args.nmax)
    except LadderError as exc:
        reports = exc.reports
        print(str(exc), file=sys.stderr)
        status = EXIT_NONCONVERGED if not all(r.converged for r in reports) else EXIT_VERIFY
    except CollapseError as exc:
        print(f"collapse: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    checks = ladder_checks(reports)
    print(f"{'group':<14}{'I':>16}{'residual':>12}{'radial res':>12}  sign")
    from .symmetry import invariance_residual

    for r in reports:
        name = str(r.group)
        fpath = write_field(out / f"{name.replace(':', '_')}.lspf", r.field)
        rpath = write_json(out / f"{name.replace(':', '_')}.json", r.to_dict(field_file=fpath.name))
        manifest.add(fpath)
        manifest.add(rpath)
        rad = invariance_residual(r.field, SymmetryGroup.radial())
        print(f"{name:<14}{r.breakdown.I:>16.10g}{r.grad_residual:>12.2e}{rad:>12.3f}  "
              f"{'changes' if not r.sign_definite else 'definite'}")
    summary = write_json(out / "ladder.json", {"energies": [r.breakdown.I for r in reports], "checks": checks})
    manifest.add(summary)
    manifest.write()
    print("checks: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    return status


# -- convolve-test -------------------------------------------------------------

def cmd_convolve_test(args) -> int:
    if args.N > CONVOLVE_MAX_N:
        raise UsageError(f"convolve-test is capped at N <= {CONVOLVE_MAX_N} (direct sum is O(N^4))")
    grid = GridSpec(args.L, args.N)
    rng = np.random.default_rng(args.seed)
    fields = {
        "gaussian": grid.sample(lambda x, y: np.exp(-(x * x + y * y) / 2)),
        "random": Field(grid, rng.standard_normal(grid.shape)),
    }
    tables = kernel_tables(grid, args.origin_rule)
    worst = 0.0
    for name, u in fields.items():
        for kernel in ("k0", "k1", "k2"):
            fast = tables.convolve(u.values ** 2, kernel)
            direct = direct_log_potential(u, kernel, args.origin_rule).values
            dev = float(np.max(np.abs(fast - direct)))
            worst = max(worst, dev)
            print(f"{name:<10}{kernel:<4} max |fast - direct| = {dev:.3e}")
    ok = worst <= args.tol
    print(f"worst deviation {worst:.3e} vs tolerance {args.tol:.1e}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="logsp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"logsp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="compute a critical point")
    s.add_argument("--p", type=float, required=True)
    _add_discretization(s)
    s.add_argument("--group", default=None, help="radial, oddeven or dihedral:<k>")
    s.add_argument("--strategy", choices=("fiber", "flow"), default="fiber")
    s.add_argument("--config", help="key=value solver config file")
    s.add_argument("--init", help="LSPF1 initial field")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check identities on a stored field")
    v.add_argument("file")
    v.add_argument("--p", type=float, required=True)
    v.add_argument("--stencil", type=int, choices=(2, 4), default=4)
    v.add_argument("--origin-rule", choices=ORIGIN_RULES, default=DEFAULT_ORIGIN)
    v.add_argument("--grad-tol", type=float, default=1e-5)
    v.add_argument("--identity-tol", type=float, default=1e-3)
    v.add_argument("--asym-tol", type=float, default=5e-3)
    v.add_argument("--json", help="also write the table as JSON")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fiber-scan", help="tabulate h(t), h'(t), J(u_t)")
    f.add_argument("--p", type=float, required=True)
    f.add_argument("--gaussian", action="store_true", help="use exp(-|x|^2/2) on the grid")
    f.add_argument("--field", help="LSPF1 field")
    f.add_argument("--moments", help="a,b,c,d")
    _add_discretization(f, N=128)
    f.add_argument("--t-min", type=float, default=1e-3)
    f.add_argument("--t-max", type=float, default=1e3)
    f.add_argument("--samples", type=int, default=2001)
    f.add_argument("--out", help="CSV path (default: stdout)")
    f.set_defaults(func=cmd_fiber_scan)

    ld = sub.add_parser("ladder", help="Dihedral(3^n) solutions, n = 1..nmax")
    ld.add_argument("--p", type=float, required=True)
    ld.add_argument("--nmax", type=int, default=2)
    # symmetric states concentrate on a ring of radius ~0.7; a small box keeps them resolved
    _add_discretization(ld, L=2.0)
    ld.add_argument("--config")
    ld.add_argument("--out", default="out-ladder")
    ld.set_defaults(func=cmd_ladder)

    c = sub.add_parser("convolve-test", help="fast convolution against the direct sum")
    c.add_argument("--N", type=int, default=32)
    c.add_argument("--L", type=float, default=8.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--origin-rule", choices=ORIGIN_RULES, default=DEFAULT_ORIGIN)
    c.add_argument("--tol", type=float, default=CONVOLVE_TOL)
    c.set_defaults(func=cmd_convolve_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FieldFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
