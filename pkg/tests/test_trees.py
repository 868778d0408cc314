import numpy as np
import pytest

from lindtorus.errors import BudgetError
from lindtorus.fourier import fd_derivatives
from lindtorus.trees import (Leg, Node, TreeEnumerator, counting_check_trees, decomposition_check,
                             enumerate_trees, find_self_energy_clusters, flatten, self_energy_matrix,
                             symmetry_factor, tree_value, verify_derivative_zeros,
                             verify_transpose_symmetries, verify_zero_mode_link)


def test_symmetry_factor():
    a = Node((1, 0), 0, 0)
    b = Node((0, 1), 1, 0)
    assert symmetry_factor((a, a, b)) == 2
    assert symmetry_factor((a, a, a, b, b)) == 12
    assert symmetry_factor(()) == 1


def test_node_order_and_momentum():
    leaf = Node((1, 0), 2, 0)
    root = Node((0, 1), 0, 1, (leaf, leaf))
    assert root.order == 3
    assert root.momentum == (2, 1)
    assert [n.mode for n in root.nodes()] == [(0, 1), (1, 0), (1, 0)]


def test_order_one_trees(f_std, scales):
    # order one: a single node; a_nu = -[d_alpha f]_nu / (omega.nu)^2 once the Psi_n sum to one
    trees = enumerate_trees(1, (0, 1), 1, f_std, scales)
    y = scales.freq.dot((0, 1))
    total = sum(tree_value(t, scales, f_std).eval(0.3) for t in trees)
    # [d_alpha2 f]_{(0,1)} = i/2 for cos(alpha2)
    assert total == pytest.approx(-0.5j / y**2, rel=1e-14)


@pytest.mark.parametrize("k", [1, 2])
def test_tree_sum_matches_recursion(k, tree_enum, table):
    worst = 0.0
    for nu in [(1, 0), (0, 1), (1, -1), (2, 1), (-1, 2), (0, 2)]:
        for h in range(3):
            diff = tree_enum.sum_trees(k, nu, h) - table.entry(k, nu, h)
            worst = max(worst, diff.max_abs())
    assert worst <= 1e-13


def test_tree_budget(f_std, scales):
    te = TreeEnumerator(f_std, scales, budget=5)
    with pytest.raises(BudgetError):
        te.sum_trees(3, (1, 1), 2)


def test_flatten_and_path():
    leg = Leg()
    inner = Node((1, 0), 0, 2, (leg,))
    root = Node((-1, 0), 2, 2, (inner,))
    fl = flatten(root)
    assert fl.leg_node == 1
    assert fl.on_path.tolist() == [True, True]
    assert fl.momentum[0].tolist() == [0, 0]


def test_zero_mode_node_is_scale_minus_one_cluster():
    leaf = Node((1, 0), 0, 3)
    mid = Node((0, 0), 1, 3, (leaf,))
    root = Node((0, 1), 2, 4, (mid,))
    found = find_self_energy_clusters(flatten(root), 4, False, False)
    assert (frozenset([1]), 1) in found


def test_cluster_jets_match_finite_differences(cluster_enum):
    for n in (0, 2):
        xs = cluster_enum.sample_x(2, n, 4, np.random.default_rng(n))
        for x in xs:
            J = cluster_enum.cumulative(2, np.array(x), n, 0.7)
            h = 1e-6 * max(abs(x), 1e-3)
            fd1, _ = fd_derivatives(lambda t: cluster_enum.cumulative(2, np.array(t), n, 0.7).value, x, h=h)
            scale = max(np.abs(J.d1).max(), 1.0)
            assert np.abs(J.d1 - fd1).max() <= 1e-5 * scale


def test_self_energy_matrix_wrapper(f_std, scales, cluster_enum):
    M = self_energy_matrix(2, 1, 0.01, f_std, scales, 0.5, cumulative=True, enumerator=cluster_enum)
    assert M.value.shape == (3, 3)
    assert np.allclose(M.value, cluster_enum.cumulative(2, np.array(0.01), 1, 0.5).value)


@pytest.mark.parametrize("k", [1, 2])
def test_matrix_identities(k, cluster_enum, table):
    reps = verify_zero_mode_link(k, table, cluster_enum, [0.2, 1.9])
    for n in (0, 1, 3):
        xs = cluster_enum.sample_x(k, n, 6, np.random.default_rng(k + n))
        reps += verify_transpose_symmetries(k, cluster_enum, n, xs, 0.8)
        reps += verify_derivative_zeros(k, cluster_enum, n, 0.8)
    assert [r["check"] for r in reps if not r["pass"]] == []


def test_decomposition(cluster_enum):
    assert decomposition_check(2, cluster_enum, 1, [0.02, 0.2], 1.1) <= 1e-10


def test_counting_trees_small(tree_enum):
    res = counting_check_trees(tree_enum, 2)
    assert res["checked"] > 0
    assert res["violations"] == []
