import json
import math

import numpy as np
import pytest

from logsp.energy import Params, energy
from logsp.fiber import moments, project_to_manifold, rescale
from logsp.grid import GridSpec
from logsp.io import dumps
from logsp.solver import (
    CollapseError,
    ConvergenceError,
    InitialGuess,
    SolverConfig,
    grad_residual,
    minimax_energy,
    seed_field,
    solve_damped_flow,
    solve_fiber_projected,
    worker_count,
)
from logsp.symmetry import SymmetryGroup, invariance_residual

from .conftest import gaussian, solved

G64 = GridSpec(8.0, 64)
G128 = GridSpec(12.0, 128)


def test_config_defaults():
    c = SolverConfig()
    assert (c.max_iters, c.grad_tol, c.step0, c.backtrack, c.armijo) == (5000, 1e-6, 0.1, 0.5, 1e-4)
    assert c.initial == InitialGuess("gaussian", 1.0, 2.0, (0.0, 0.0))


def test_config_from_text():
    c = SolverConfig.from_text("""
        # comment
        max_iters = 200
        grad_tol=1e-7
        initial = noise   # trailing comment
        noise = 0.05
        offset = 0.5, -0.25
        seed = 3
    """)
    assert c.max_iters == 200 and isinstance(c.max_iters, int)
    assert c.grad_tol == 1e-7 and c.seed == 3
    assert c.initial.kind == "noise" and c.initial.noise == 0.05 and c.initial.offset == (0.5, -0.25)


@pytest.mark.parametrize("text", ["bogus = 1", "max_iters", "backtrack = 1.5", "grad_tol = -1", "initial = spiral"])
def test_config_rejects(text):
    with pytest.raises(ValueError):
        SolverConfig.from_text(text)


def test_fiber_strategy_requires_p3():
    with pytest.raises(ValueError):
        solve_fiber_projected(Params(2.5, G64))


def test_tiny_amplitude_collapses():
    prm = Params(3, G64)
    u0 = gaussian(G64, 1e-3)
    with pytest.raises(CollapseError):
        solve_damped_flow(prm, SolverConfig(), None, u0)


def test_zero_start_refused():
    with pytest.raises(CollapseError):
        solve_fiber_projected(Params(3, G64), u0=G64.zeros())


def test_strict_nonconvergence_raises():
    cfg = SolverConfig(max_iters=2, newton_iters=0)
    with pytest.raises(ConvergenceError) as exc:
        solve_fiber_projected(Params(3, G64), cfg, strict=True)
    assert exc.value.report is not None and not exc.value.report.converged


def test_seed_fields_live_in_their_groups():
    for grp in (SymmetryGroup.oddeven(), SymmetryGroup.dihedral(1), SymmetryGroup.dihedral(2)):
        u = seed_field(G64, grp, InitialGuess())
        assert invariance_residual(u, grp) <= 1e-14
        assert np.max(np.abs(u.values)) == pytest.approx(2.0, rel=1e-12) or grp.kind != "oddeven"


def test_noise_seed_deterministic():
    a = seed_field(G64, None, InitialGuess(kind="noise", noise=0.1), seed=4)
    b = seed_field(G64, None, InitialGuess(kind="noise", noise=0.1), seed=4)
    c = seed_field(G64, None, InitialGuess(kind="noise", noise=0.1), seed=5)
    assert a == b and not (a == c)


def test_ground_state_regression_n128():
    rep = solved(3.0, N=128)
    assert rep.converged and rep.grad_residual <= 1e-6
    # regression value of this discretization (not a continuum oracle)
    assert rep.breakdown.I == pytest.approx(3.713610737229, rel=1e-9)
    assert np.all(np.diff(rep.I_history) <= 0)
    assert rep.sign_definite and rep.label == "ground state"
    assert rep.minimax_energy == pytest.approx(rep.breakdown.I, rel=1e-6)


def test_determinism_bitwise():
    prm = Params(4, G64)
    cfg = SolverConfig(initial=InitialGuess(kind="noise", noise=0.05), seed=11)
    a = solve_fiber_projected(prm, cfg)
    b = solve_fiber_projected(prm, cfg)
    assert a.I_history == b.I_history
    assert a.field == b.field


def test_minimax_examples():
    prm = Params(3, G128)
    rep = solved(3.0, N=128)
    assert minimax_energy(rep.field, prm) == pytest.approx(rep.breakdown.I, rel=1e-6)
    u = gaussian(G128, 0.7, 1.3)
    assert minimax_energy(u, prm) >= energy(u, prm).I
    # on the fiber maximum itself the two coincide to rounding
    m = moments(u, prm)
    t = project_to_manifold(m)
    from logsp.fiber import fiber_energy

    assert minimax_energy(u, prm) == pytest.approx(fiber_energy(m, t), rel=1e-12)
    with pytest.raises(ValueError):
        minimax_energy(G128.zeros(), prm)


def test_radial_not_below_unconstrained():
    free = solved(3.0, N=128)
    rad = solved(3.0, group="radial", N=128)
    assert rad.converged
    assert rad.breakdown.I >= free.breakdown.I - 1e-6


def test_dihedral1_sign_changing_above_ground():
    free = solved(3.0, N=128)
    d1 = solved(3.0, group="dihedral:1", N=128)
    assert d1.converged and not d1.sign_definite
    assert d1.breakdown.I > free.breakdown.I


def test_flow_subcubic_label_and_json():
    rep = solved(2.5, strategy="flow", N=128)
    assert rep.converged and rep.label == "critical point candidate"
    d = json.loads(dumps(rep.to_dict(field_file="x.lspf")))
    assert d["strategy"] == "damped-flow" and d["field_file"] == "x.lspf"
    assert set(d["breakdown"]) >= {"kinetic", "mass", "v0", "I", "J", "P"}
    assert len(d["J_history"]) == len(d["residual_history"])


def test_grad_residual_scale_invariant_definition():
    prm = Params(3, G64)
    u = gaussian(G64, 1.5)
    from logsp.energy import gradient_array

    g = gradient_array(u.values, prm)
    e = energy(u, prm)
    expect = math.sqrt(G64.h ** 2 * np.sum(g * g)) / math.sqrt(e.h1_sq)
    assert grad_residual(u, prm) == pytest.approx(expect, rel=1e-12)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("LOGSP_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("LOGSP_THREADS", "zero")
    assert worker_count() == 1
    monkeypatch.delenv("LOGSP_THREADS")
    assert worker_count() == 1


def test_rescaled_ground_state_projects_back():
    rep = solved(3.0, N=128)
    prm = Params(3, G128)
    u = rescale(rep.field, 1.3)
    t = project_to_manifold(moments(u, prm))
    assert t == pytest.approx(1 / 1.3, rel=1e-3)
