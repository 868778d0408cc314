import json

import numpy as np
import pytest

from lindtorus.errors import BudgetError
from lindtorus.lindstedt import (CoeffTable, assemble_fields, brackets_by_sampling, compute_series,
                                 parse_component, component_label)
from lindtorus.smalldiv import Frequency


def test_leading_zero_modes(table):
    # G^(0) = d_beta of the beta-only part = -sin(beta0)
    for b in (0.2, 1.3, -2.0):
        assert table.G(0).eval(b) == pytest.approx(-np.sin(b), abs=1e-15)
    assert table.G(1).max_abs() <= 1e-15


def test_odd_fixture_zero_modes(f_odd, freq):
    tab = compute_series(f_odd, freq, 2)
    assert tab.G(0).max_abs() == 0.0
    for b in (0.3, 1.0, 2.2):
        assert tab.G(1).eval(b).real == pytest.approx(0.5 * np.sin(2 * b), abs=1e-14)


@pytest.mark.parametrize("beta0", [0.4, 2.1])
def test_brackets_match_sampling_oracle(table, beta0):
    ref = brackets_by_sampling(table.truncate(3), 3, beta0)
    worst = 0.0
    for k in range(4):
        for h in range(3):
            collapsed = {}
            for (nu, m), c in table.bracket(k, h):
                collapsed[nu] = collapsed.get(nu, 0.0) + c * np.exp(1j * m * beta0)
            for nu, val in collapsed.items():
                if max(abs(v) for v in nu) < 8:
                    worst = max(worst, abs(ref[(k, nu, h)] - val) / max(table.scales[k], 1.0))
    assert worst < 1e-9


def test_range_equations_hold(table):
    # (omega.nu)^2 a_nu = -[d_alpha f]_nu and (omega.nu)^2 b_nu = [d_beta f]_nu
    om = np.array(table.omega)
    for k in range(1, table.K + 1):
        for (nu, m), c in table.b[k]:
            br = table.dB[k - 1][(nu, m)]
            assert (om @ nu) ** 2 * c == pytest.approx(br, abs=1e-12 * max(1, abs(br)))
        for j in range(table.d):
            for (nu, m), c in table.a[k][j]:
                br = table.dA[k - 1][j][(nu, m)]
                assert (om @ nu) ** 2 * c == pytest.approx(-br, abs=1e-12 * max(1, abs(br)))


def test_truncate_and_limits(table):
    t2 = table.truncate(2)
    assert t2.K == 2
    assert (t2.G(2) - table.G(2)).max_abs() == 0.0
    with pytest.raises(BudgetError):
        table.truncate(table.K + 1)


def test_json_round_trip(table):
    data = json.loads(table.to_json())
    back = CoeffTable.entries_from_dict(data)
    for k, nu, h, p in table.entries():
        assert (back[(k, nu, h)] - p).max_abs() == 0.0
    assert table.to_csv().splitlines()[0] == "k,nu,h,m,re,im"


def test_component_labels():
    for h in range(3):
        assert parse_component(component_label(h, 2), 2) == h


def test_assemble_fields_reality(table):
    fields = assemble_fields(table, 1e-2, 0.7, K=3)
    for nu, vec in fields.items():
        neg = tuple(-v for v in nu)
        assert np.allclose(fields[neg], np.conj(vec), atol=1e-15)


def test_dimension_mismatch(f_std):
    with pytest.raises(ValueError):
        compute_series(f_std, Frequency((1.0, 0.6180339887498949, 0.4142135623730951), M_max=4), 2)


def test_term_budget(f_std, freq):
    with pytest.raises(BudgetError):
        compute_series(f_std, freq, 4, term_budget=10)
