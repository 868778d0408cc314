import numpy as np
import pytest

from lindtorus.fourier import BetaPoly
from lindtorus.lindstedt import compute_series
from lindtorus.torus import (Regime, TorusSolution, assemble, classify_condition, find_roots,
                             newton_branch, solve_bifurcation, verify_ode, verify_residual, vanishes)

EPS = [1e-3, 5e-4, 2.5e-4, -1e-3, -5e-4, -2.5e-4]


@pytest.fixture(scope="module")
def table3(f_std, freq):
    return compute_series(f_std, freq, 3)


def test_vanishes():
    assert vanishes(BetaPoly.zero(), 1.0)
    assert vanishes(BetaPoly.cos(1, 1e-12), 1.0)
    assert not vanishes(BetaPoly.cos(1, 1e-6), 1.0)


def test_find_roots_sin():
    roots, degenerate = find_roots(BetaPoly.sin(1))
    assert sorted(r.beta0 for r in roots) == pytest.approx([-np.pi, 0.0], abs=1e-14)
    assert sorted(r.slope_sign for r in roots) == [-1, 1]
    assert degenerate == []


def test_find_roots_even_order_is_degenerate():
    # 1 - cos(beta) touches zero at 0 without changing sign
    roots, _ = find_roots(BetaPoly.const(1.0) - BetaPoly.cos(1))
    assert roots == []


def test_find_roots_three_harmonic():
    g = BetaPoly.sin(3)
    roots, _ = find_roots(g)
    expect = [-np.pi + j * np.pi / 3 for j in range(6)]
    assert sorted(r.beta0 for r in roots) == pytest.approx(expect, abs=1e-12)


def test_classify_standard(table3):
    reg = classify_condition(table3)
    assert (reg.kind, reg.order) == ("Condition2", 0)


def test_classify_odd_fixture(f_odd, freq):
    reg = classify_condition(compute_series(f_odd, freq, 2))
    assert (reg.kind, reg.order) == ("Condition2", 1)


def test_classify_beta_free(freq):
    from lindtorus.fourier import TrigPoly
    f = TrigPoly.cos((1, 0)) + TrigPoly.cos((0, 1))
    reg = classify_condition(compute_series(f, freq, 2))
    assert reg.kind == "Undetermined"
    assert solve_bifurcation(compute_series(f, freq, 2), regime=reg).k0 is None


def test_bifurcation_standard(table3):
    res = solve_bifurcation(table3, eps_list=EPS)
    assert res.k0 == 0
    assert sorted(r.beta0 for r in res.roots) == pytest.approx([-np.pi, 0.0], abs=1e-12)
    for br in res.branches:
        assert br["converged"] and br["G_residual"] <= 1e-12
    assert res.selected(1e-3)["root_index"] != res.selected(-1e-3)["root_index"]
    for e in EPS:
        br = res.selected(e)
        assert br["eps_dG"] <= 0


def test_bifurcation_odd_fixture(f_odd, freq):
    tab = compute_series(f_odd, freq, 3)
    res = solve_bifurcation(tab, eps_list=[1e-3, -1e-3])
    assert res.k0 == 1
    assert sorted(r.beta0 for r in res.roots) == pytest.approx([-np.pi, -np.pi / 2, 0.0, np.pi / 2], abs=1e-12)
    for e in (1e-3, -1e-3):
        assert abs(abs(res.selected(e)["beta0"]) - np.pi / 2) < 1e-3


def test_newton_branch_tracks_root(table3):
    br = newton_branch(table3, 0, 3, 0.0, 1e-3)
    assert br["converged"]
    assert abs(br["beta0"]) < 1e-5


def test_solution_round_trip(table3):
    sol = assemble(table3, 1e-3, 0.0, regime="Condition2")
    back = TorusSolution.from_dict(sol.to_dict())
    psi = np.array([[0.3, 1.7], [2.0, -0.4]])
    assert np.allclose(back.evaluate(psi), sol.evaluate(psi))


def test_solution_real_and_derivative(table3):
    sol = assemble(table3, 1e-2, 0.0)
    psi = np.array([[0.3, 1.7]])
    assert abs(np.imag(sol.evaluate(psi))).max() < 1e-15
    h = 1e-5
    om = np.array(sol.omega)
    fd = (sol.evaluate(psi + h * om) - sol.evaluate(psi - h * om)) / (2 * h)
    assert np.allclose(sol.evaluate(psi, order=1), fd, atol=1e-9)


def test_residual_shrinks_with_eps(table3):
    res = solve_bifurcation(table3, eps_list=[1e-2, 5e-3])
    r = [verify_residual(assemble(table3, e, res.selected(e)["beta0"]), table3.f)["r_range"] for e in (1e-2, 5e-3)]
    assert np.log2(r[0] / r[1]) >= 3.5


def test_unperturbed_ode(table3):
    sol = assemble(table3, 0.0, 0.0)
    out = verify_ode(sol, table3.f, T=2.0)
    assert out["deviation"] <= 1e-12
    assert out["escape_time"] is None


def test_regime_dict():
    assert Regime("Condition2", 0, 3).to_dict()["kind"] == "Condition2"
