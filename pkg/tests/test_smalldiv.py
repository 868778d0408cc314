
import numpy as np
import pytest
from hypothesis import given, strategies as st

from lindtorus.errors import BudgetError
from lindtorus.smalldiv import (GOLDEN, Frequency, alpha_m, build_scales, bryuno_partial,
                                chi_jet, cutoff_chi, cutoff_Psi, cutoff_xi)
from lindtorus.fourier import fd_derivatives


def test_golden_first_entries(freq):
    # |nu|_1 <= 1: min(1, gamma); |nu|_1 <= 2: 1 - gamma from nu = (1, -1)
    assert freq.alpha_table[0] == pytest.approx(GOLDEN, abs=0)
    assert freq.alpha_table[1] == pytest.approx(1 - GOLDEN, rel=1e-15)


def test_alpha_non_increasing(freq):
    al = np.array(freq.alpha_table)
    assert np.all(np.diff(al) <= 0)
    assert np.all(al > 0)


def test_resonant_frequency_rejected():
    with pytest.raises(ValueError):
        Frequency((1.0, 0.5), M_max=4)


def test_alpha_beyond_table_raises(freq):
    with pytest.raises(BudgetError):
        alpha_m(freq, freq.M_max + 1)


def test_bryuno_partial_increasing(freq):
    vals = [bryuno_partial(freq, M) for M in range(10)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_scale_sequence_recursion(scales):
    m, p = scales.m_seq, scales.p_seq
    assert m[0] == 0
    assert all(m[n + 1] == m[n] + p[n] + 1 for n in range(len(p)))
    al = scales.alpha_table
    assert not scales.halving_failures
    for n in range(len(p)):
        assert al[m[n + 1]] <= al[m[n]] / 2


def test_scales_need_table(freq):
    with pytest.raises(BudgetError):
        build_scales(Frequency(freq.omega, M_max=3), 8)


def test_chi_shape():
    assert cutoff_chi(0.0) == 1.0
    assert cutoff_chi(0.5) == 1.0
    assert cutoff_chi(1.0) == 0.0
    assert cutoff_chi(-2.0) == 0.0
    xs = np.linspace(0.5, 1.0, 200)
    assert np.all(np.diff(cutoff_chi(xs)) <= 0)


@given(st.floats(0.52, 0.98))
def test_chi_jet_matches_finite_differences(x):
    v, d1, d2 = chi_jet(x)
    fd1, fd2 = fd_derivatives(lambda t: chi_jet(t)[0], x, h=1e-5)
    assert d1 == pytest.approx(fd1, abs=1e-5)
    assert d2 == pytest.approx(fd2, abs=1e-2 * max(1.0, abs(d2)))


@given(st.floats(-0.98, -0.52))
def test_chi_even(x):
    assert chi_jet(x)[0] == chi_jet(-x)[0]
    assert chi_jet(x)[1] == pytest.approx(-chi_jet(-x)[1])


def test_Psi_telescopes(scales):
    xs = np.geomspace(1e-9, 3.0, 500)
    total = sum(cutoff_Psi(n, xs, scales) for n in range(scales.n_max + 1))
    assert np.allclose(total, 1.0 - scales.chi(scales.n_max, xs), atol=1e-15)


def test_admissible_scales_contiguous(scales):
    for y in np.geomspace(1e-7, 2.0, 300):
        s = scales.admissible_scales(y)
        assert s == list(range(s[0], s[0] + len(s))) if s else True
        assert len(s) <= 2


def test_xi_switch(scales):
    for n in range(scales.n_max + 1):
        a, b = scales.xi_bounds(n)
        assert cutoff_xi(n, a, scales) == 1.0
        assert cutoff_xi(n, 0.5 * a, scales) == 1.0
        assert cutoff_xi(n, b, scales) == 0.0
        xs = np.linspace(a, b, 50)
        assert np.all(np.diff(cutoff_xi(n, xs, scales)) <= 0)


def test_scale_index_checked(scales):
    with pytest.raises(BudgetError):
        scales.Psi(scales.n_max + 1, 0.1)
