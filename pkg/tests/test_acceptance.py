"""Acceptance suite on the standard example.

Each test prints one ``criterion N name: PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from lindtorus.lindstedt import compute_series
from lindtorus.resum import (block_order_ratios, build_resum, check_matrix_symmetries,
                             class_closure_check, random_class_member, resummed_coeffs)
from lindtorus.smalldiv import GOLDEN, Frequency
from lindtorus.torus import assemble, solve_bifurcation, verify_ode, verify_residual
from lindtorus.trees import (counting_check_clusters, counting_check_trees, verify_derivative_zeros,
                             verify_transpose_symmetries, verify_zero_mode_link)

EPS = [1e-3, 5e-4, 2.5e-4, -1e-3, -5e-4, -2.5e-4]
NUS = [nu for nu in itertools.product(range(-3, 4), repeat=2) if 0 < sum(map(abs, nu)) <= 3]


def brute_force_alpha(omega, N):
    r = np.arange(-N, N + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    mask = (np.abs(n1) + np.abs(n2) <= N) & ((n1 != 0) | (n2 != 0))
    vals = np.abs(omega[0] * n1 + omega[1] * n2)
    vals = np.where(mask, vals, np.inf)
    i = np.unravel_index(np.argmin(vals), vals.shape)
    return float(vals[i]), (int(n1[i]), int(n2[i]))


@pytest.fixture(scope="module")
def table3(f_std, freq):
    return compute_series(f_std, freq, 3)


@pytest.fixture(scope="module")
def bif(table3):
    return solve_bifurcation(table3, eps_list=EPS + [0.01, 0.005])


def test_small_divisor_oracle():
    t0 = time.perf_counter()
    fr = Frequency((1.0, GOLDEN), M_max=10)
    elapsed = time.perf_counter() - t0
    ok = True
    for m in range(11):
        val, nu = brute_force_alpha(fr.omega, 2 ** m)
        same = tuple(fr.argmin_table[m]) in (nu, tuple(-v for v in nu))
        ok &= fr.alpha_table[m] == val and same
    ok &= elapsed < 10
    assert record_criterion(1, "small-divisor oracle", ok, f"runtime={elapsed:.2f}s")


def test_partition_of_unity(scales):
    rng = np.random.default_rng(2)
    lo = scales.alpha_scale(scales.n_max) / 8
    hi = scales.alpha_scale(0)
    xs = np.exp(rng.uniform(np.log(lo), np.log(hi), 10_000)) * rng.choice([-1, 1], 10_000)
    Psi = np.array([scales.Psi(n, xs) for n in range(scales.n_max + 1)])
    dev = float(np.abs(Psi.sum(axis=0) - 1).max())
    most = int((Psi != 0).sum(axis=0).max())
    ok = dev <= 1e-12 and most <= 2
    assert record_criterion(2, "partition of unity", ok, f"max_dev={dev:.1e} max_nonzero={most}")


def test_tree_oracle_equivalence(tree_enum, table, beta_samples):
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(1, 4):
        ref = {(nu, h): table.entry(k, nu, h).eval(beta_samples) for nu in NUS for h in range(3)}
        scale = max(float(np.abs(v).max()) for v in ref.values())
        for (nu, h), r in ref.items():
            got = tree_enum.sum_trees(k, nu, h).eval(beta_samples)
            worst = max(worst, float(np.abs(got - r).max()) / scale)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 120
    assert record_criterion(3, "tree sums equal recursion", ok, f"rel_err={worst:.1e} runtime={elapsed:.1f}s")


def test_alpha_zero_modes_vanish(table):
    worst = 0.0
    for k in range(5):
        worst = max(worst, max(p.max_abs() for p in table.F(k)) / max(table.scales[k], 1.0))
    assert record_criterion(4, "alpha zero modes vanish", worst <= 1e-10, f"max_rel={worst:.1e}")


def test_self_energy_identities(cluster_enum):
    failed, worst = [], 0.0
    for k in range(1, 4):
        for n in range(5):
            xs = cluster_enum.sample_x(k, n, 20, np.random.default_rng(100 * k + n))
            for beta0 in (0.3, 2.1):
                reps = verify_transpose_symmetries(k, cluster_enum, n, xs, beta0, tol=1e-9)
                reps += verify_derivative_zeros(k, cluster_enum, n, beta0, tol=1e-9)
                failed += [(r["check"], k, n) for r in reps if not r["pass"]]
                worst = max([worst] + [r["max_deviation"] for r in reps])
    ok = not failed
    assert record_criterion(5, "self-energy matrix identities", ok, f"max_dev={worst:.1e} failed={failed[:3]}")


def test_zero_mode_link(cluster_enum, table, beta_samples):
    reps = []
    for k in range(1, 4):
        reps += verify_zero_mode_link(k, table, cluster_enum, beta_samples, tol=1e-9)
    worst = max(r["max_deviation"] for r in reps)
    ok = all(r["pass"] for r in reps)
    assert record_criterion(6, "self-energy at zero vs zero modes", ok, f"max_dev={worst:.1e}")


def test_zero_mode_mean_zero(table):
    worst = 0.0
    for k in range(5):
        worst = max(worst, abs(table.G(k)[0]) / max(table.scales[k], 1.0))
    assert record_criterion(7, "beta zero modes have mean zero", worst <= 1e-12, f"max_rel={worst:.1e}")


def test_class_closure():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(100):
        d = 2 + i % 2
        B = random_class_member(d, rng)
        res = class_closure_check(B, rng.uniform(0.05, 1.0, 5), d)
        worst = max(worst, res["inverse_deviation"])
    assert record_criterion(8, "class closed under inversion", worst <= 1e-10, f"max_dev={worst:.1e}")


def test_resummed_identities(f_std, freq, scales, cluster_enum):
    st = build_resum(f_std, freq, scales, 2, beta0=0.7, symbolic=True)
    failed, worst = [], 0.0
    for n in range(5):
        xs = cluster_enum.sample_x(2, n, 20, np.random.default_rng(n))
        reps = check_matrix_symmetries(st, n, xs, tol=1e-9)
        failed += [(r["check"], n) for r in reps if not r["pass"]]
        worst = max([worst] + [r["max_deviation"] for r in reps])
    rat = block_order_ratios(st, 4, 1e-4, decade=10)
    raa, rba = np.array(rat["alpha_alpha_over_x2"]), np.array(rat["beta_alpha_over_x"])
    # bounded ratios over the decade: O(x^2) and O(x) blocks
    bounded = raa.max() <= 2 * raa.min() + 1e-12 and rba.max() <= 2 * rba.min() + 1e-12
    ok = not failed and bounded
    assert record_criterion(9, "resummed matrix identities", ok,
                            f"max_dev={worst:.1e} aa/x2={raa.max():.3g} ba/x={rba.max():.1e}")


def test_reexpansion(f_std, freq, scales, table):
    worst = 0.0
    for beta0 in (0.3, 1.7):
        st = build_resum(f_std, freq, scales, 3, beta0=beta0, symbolic=True)
        rt = resummed_coeffs(st, 3, NUS)
        for k in range(1, 4):
            refs = {nu: np.array([table.entry(k, nu, h).eval(beta0) for h in range(3)]) for nu in NUS}
            scale = max(float(np.abs(v).max()) for v in refs.values())
            for nu, ref in refs.items():
                worst = max(worst, float(np.abs(rt.eps_order(nu, k) - ref).max()) / scale)
    assert record_criterion(10, "resummed series re-expands to plain", worst <= 1e-8, f"rel_err={worst:.1e}")


def test_bifurcation(bif):
    def circ(a, b):
        return abs((a - b + np.pi) % (2 * np.pi) - np.pi)

    roots = [r.beta0 for r in bif.roots]
    root_ok = len(roots) == 2 and all(min(circ(r, t) for r in roots) <= 1e-12 for t in (0.0, np.pi))
    worst = 0.0
    ok_br = True
    for e in EPS:
        brs = [b for b in bif.branches if b["eps"] == e]
        ok_br &= len(brs) == 2 and all(b["converged"] for b in brs)
        worst = max([worst] + [b["G_residual"] for b in brs])
    ok = bif.k0 == 0 and root_ok and ok_br and worst <= 1e-12
    assert record_criterion(11, "bifurcation roots and branches", ok, f"k0={bif.k0} G_residual={worst:.1e}")


def test_residual_order(table3, bif, f_std):
    t0 = time.perf_counter()
    r = {}
    for e in (1e-3, 5e-4):
        sol = assemble(table3, e, bif.selected(e)["beta0"])
        r[e] = verify_residual(sol, f_std)["r_range"]
    slope = math.log2(r[1e-3] / r[5e-4])
    elapsed = time.perf_counter() - t0
    ok = slope >= 3.5 and r[1e-3] <= 1e-6 and elapsed < 60
    assert record_criterion(12, "residual order", ok,
                            f"r_range(1e-3)={r[1e-3]:.2e} log2_ratio={slope:.2f} runtime={elapsed:.1f}s")


def test_ode_cross_check(table3, bif, f_std):
    dev0 = verify_ode(assemble(table3, 0.0, 0.0), f_std, T=10.0)["deviation"]
    devs = [verify_ode(assemble(table3, e, bif.selected(e)["beta0"]), f_std, T=10.0)["deviation"]
            for e in (0.01, 0.005)]
    ratio = devs[0] / devs[1]
    ok = dev0 <= 1e-10 and ratio >= 2 ** 3.5 * 0.7
    assert record_criterion(13, "ODE cross-check", ok, f"eps0_dev={dev0:.1e} halving_ratio={ratio:.2f}")


def test_counting(tree_enum, cluster_enum):
    tr = counting_check_trees(tree_enum, 3)
    cl = counting_check_clusters(cluster_enum, 3, range(5), xs_per_scale=21)
    ok = not tr["violations"] and not cl["violations"] and tr["checked"] > 0
    assert record_criterion(14, "counting bounds", ok,
                            f"trees={tr['checked']} clusters={cl['checked']} "
                            f"violations={len(tr['violations']) + len(cl['violations'])}")


def test_regularisation_inactive(f_std, freq, scales, bif):
    beta0 = bif.selected(1e-3)["beta0"]
    st = build_resum(f_std, freq, scales, 3, eps=1e-3, beta0=beta0, regularised=True, k0=0)
    xis = [st.xi(n) for n in range(scales.n_max + 1)]
    ok = all(x == 1.0 for x in xis)
    assert record_criterion(15, "regularisation switch inactive", ok,
                            f"n_max={scales.n_max} min_xi={min(xis)}")
