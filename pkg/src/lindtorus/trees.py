"""Labelled trees, self-energy clusters and their values.

Trees are the independent oracle for the recursion in ``lindstedt`` and the
engine behind the self-energy checks.  A tree is a rooted ``Node``; the
line leaving a node carries that node's component and scale.  Children are
stored as a sorted tuple, so each equivalence class of trees appears once;
identical sibling subtrees contribute the factor ``1/mult!`` (the
``1/(p! q!)`` of the node factor divided by the number of orderings).

Components are integers: ``0..d-1`` for ``alpha_1..alpha_d`` and ``d`` for
``beta``.  A ``Leg`` marks the entering line of a self-energy cluster.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import BudgetError
from .fourier import BetaPoly, Jet2, TrigPoly
from .smalldiv import ScaleSystem

UNSET = -9  # placeholder for a label that is summed over rather than fixed
DEFAULT_TREE_BUDGET = 2_000_000


@dataclass(frozen=True)
class Leg:
    """Entering line of a cluster, with component ``comp`` (``UNSET`` = any)."""

    comp: int = UNSET

    def key(self):
        return (0, self.comp)

    order = 0
    has_leg = True


@dataclass(frozen=True)
class Node:
    """A node together with the line leaving it."""

    mode: tuple
    comp: int
    scale: int
    children: tuple = ()

    def key(self):
        return (1, self.mode, self.comp, self.scale, tuple(c.key() for c in self.children))

    @cached_property
    def order(self):
        return 1 + sum(c.order for c in self.children)

    @cached_property
    def momentum(self):
        """Momentum of the leaving line, entering-leg momentum excluded."""
        out = np.array(self.mode, dtype=int)
        for c in self.children:
            if isinstance(c, Node):
                out = out + np.array(c.momentum)
        return tuple(int(v) for v in out)

    @cached_property
    def has_leg(self):
        return any(c.has_leg for c in self.children)

    def nodes(self):
        yield self
        for c in self.children:
            if isinstance(c, Node):
                yield from c.nodes()

    def with_labels(self, comp=None, scale=None):
        return Node(self.mode, self.comp if comp is None else comp,
                    self.scale if scale is None else scale, self.children)


def sort_children(children: Iterable):
    return tuple(sorted(children, key=lambda c: c.key()))


def symmetry_factor(children) -> int:
    """``prod mult!`` over identical siblings."""
    out = 1
    for _, m in Counter(children).items():
        out *= math.factorial(m)
    return out


def _multisets(pool, total, start=0):
    """Multisets (as lists) of pool items whose orders sum to ``total``.

    ``pool`` must be sorted by order; items are reused with repetition.
    """
    if total == 0:
        yield []
        return
    for i in range(start, len(pool)):
        o = pool[i].order
        if o > total:
            break
        for rest in _multisets(pool, total - o, i):
            yield [pool[i]] + rest


# --------------------------------------------------------------------------
# node factors

class NodeFactors:
    """Node factors for a fixed perturbation ``f``.

    ``factor(mode, comp, child_comps)`` returns the BetaPoly
    ``s_h * (i nu)_h-or-d_beta * prod_(alpha children)(i nu)_c * d_beta^q f_nu``
    with ``s = -1`` for alpha components and ``+1`` for beta.
    """

    def __init__(self, f: TrigPoly):
        self.f = f
        self.d = f.d
        self.modes = f.mode_map()
        self._cache = {}

    def deriv(self, mode, q) -> BetaPoly:
        key = (mode, q)
        if key not in self._cache:
            self._cache[key] = self.modes.get(mode, BetaPoly.zero()).deriv(q)
        return self._cache[key]

    def factor(self, mode, comp, child_comps) -> BetaPoly:
        d = self.d
        coef = -1.0 if comp < d else 1.0
        q = 1 if comp == d else 0
        if comp < d:
            coef *= 1j * mode[comp]
        for c in child_comps:
            if c == d:
                q += 1
            else:
                coef *= 1j * mode[c]
        if coef == 0:
            return BetaPoly.zero()
        return self.deriv(mode, q).scale(coef)

    def nonzero(self, mode, comp, child_comps) -> bool:
        d = self.d
        if comp < d and mode[comp] == 0:
            return False
        if any(c < d and mode[c] == 0 for c in child_comps):
            return False
        q = (comp == d) + sum(1 for c in child_comps if c == d)
        return bool(self.deriv(mode, q))


# --------------------------------------------------------------------------
# plain labelled trees

class TreeEnumerator:
    """Enumerates the labelled trees of the plain expansion.

    Items are planted subtrees with a nonzero leaving momentum; their root
    carries a component and an admissible scale.  Trees of order ``k`` with
    a given total momentum are built from items of lower order.
    """

    def __init__(self, f: TrigPoly, scales: ScaleSystem, budget: int = DEFAULT_TREE_BUDGET):
        if scales.freq.d != f.d:
            raise ValueError("frequency and perturbation dimensions differ")
        self.f = f
        self.scales = scales
        self.omega = np.array(scales.freq.omega)
        self.d = f.d
        self.nf = NodeFactors(f)
        self.budget = budget
        self._items = {0: []}
        self._count = 0

    def admissible(self, momentum):
        if not any(momentum):
            return [-1]
        return self.scales.admissible_scales(float(self.omega @ np.array(momentum)))

    def _bump(self, n):
        self._count += n
        if self._count > self.budget:
            raise BudgetError(f"tree enumeration exceeded the budget of {self.budget} labelled trees")

    def _roots(self, j, require_nonzero):
        """Nodes of order ``j`` built from items of lower orders."""
        pool = sorted((it for o in range(1, j) for it in self.items(o)), key=lambda n: n.order)
        out = []
        d = self.d
        for mode in sorted(self.nf.modes):
            for kids in _multisets(pool, j - 1):
                mom = tuple(int(v) for v in np.array(mode) + sum((np.array(c.momentum) for c in kids), np.zeros(d, int)))
                if require_nonzero and not any(mom):
                    continue
                child_comps = [c.comp for c in kids]
                children = sort_children(kids)
                for comp in range(d + 1):
                    if not self.nf.nonzero(mode, comp, child_comps):
                        continue
                    for n in self.admissible(mom):
                        out.append(Node(mode, comp, n, children))
        self._bump(len(out))
        return out

    def items(self, j):
        if j not in self._items:
            self._items[j] = self._roots(j, require_nonzero=True)
        return self._items[j]

    def enumerate(self, k, nu, h):
        """Labelled trees in ``Theta_{k, nu, h}``."""
        nu = tuple(nu)
        if k < 1:
            return []
        if any(nu):
            return [t for t in self.items(k) if t.momentum == nu and t.comp == h]
        return [t for t in self._roots(k, require_nonzero=False) if not any(t.momentum) and t.comp == h]

    # values ------------------------------------------------------------------
    def propagator(self, node: Node):
        mom = node.momentum
        if node.scale == -1:
            return 1.0
        y = float(self.omega @ np.array(mom))
        return float(self.scales.Psi(node.scale, y)) / y**2

    def value(self, node: Node) -> BetaPoly:
        """``Val`` of the tree rooted at ``node`` (root line included)."""
        kids = node.children
        out = self.nf.factor(node.mode, node.comp, [c.comp for c in kids]).scale(1.0 / symmetry_factor(kids))
        for c in kids:
            out = out * self.value(c)
        return out.scale(self.propagator(node))

    def sum_trees(self, k, nu, h) -> BetaPoly:
        out = BetaPoly.zero()
        for t in self.enumerate(k, nu, h):
            out = out + self.value(t)
        return out


def enumerate_trees(k, nu, h, f: TrigPoly, scales: ScaleSystem, budget=DEFAULT_TREE_BUDGET):
    return TreeEnumerator(f, scales, budget).enumerate(k, nu, h)


def tree_value(theta: Node, scales: ScaleSystem, f: TrigPoly) -> BetaPoly:
    return TreeEnumerator(f, scales).value(theta)


# --------------------------------------------------------------------------
# flat view of a labelled structure (trees and clusters alike)

@dataclass
class Flat:
    """Pre-order arrays describing a tree or a cluster."""

    modes: np.ndarray          # (N, d)
    parent: np.ndarray         # (N,), -1 for the root node
    comp: np.ndarray
    scale: np.ndarray
    n_children: np.ndarray     # entering lines, leg included
    leg_node: int              # node receiving the leg, -1 if none
    momentum: np.ndarray       # (N, d) leaving-line momentum without the leg
    on_path: np.ndarray        # bool (N,), subtree contains the leg


def flatten(root: Node) -> Flat:
    modes, parent, comp, scale, nch = [], [], [], [], []
    leg_node = -1

    def visit(node, par):
        nonlocal leg_node
        idx = len(modes)
        modes.append(node.mode)
        parent.append(par)
        comp.append(node.comp)
        scale.append(node.scale)
        nch.append(len(node.children))
        for c in node.children:
            if isinstance(c, Leg):
                leg_node = idx
            else:
                visit(c, idx)

    visit(root, -1)
    modes = np.array(modes, dtype=int)
    parent = np.array(parent, dtype=int)
    N = len(modes)
    mom = modes.copy()
    for i in range(N - 1, 0, -1):  # pre-order: children come after parents
        mom[parent[i]] += mom[i]
    on_path = np.zeros(N, dtype=bool)
    i = leg_node
    while i >= 0:
        on_path[i] = True
        i = parent[i]
    return Flat(modes, parent, np.array(comp), np.array(scale), np.array(nch), leg_node, mom, on_path)


def find_self_energy_clusters(flat: Flat, root_line_internal_from: int | None,
                              exit_external: bool, require_ii: bool, max_level: int | None = None):
    """Self-energy clusters inside a labelled structure.

    Lines are those leaving non-root nodes, plus the root line when it is
    part of the structure.  ``root_line_internal_from`` is the root-line
    scale when the root line belongs to the structure (trees), else
    ``None``; ``exit_external`` says the root node's line leaves the
    structure through an external line that always exists (clusters).
    Returns a list of ``(node_set, exit_node)`` pairs; the resonant line
    is the line leaving ``exit_node``.
    """
    N = len(flat.parent)
    found = []
    # scale -1 clusters: single nodes with zero mode and one entering line
    for v in range(N):
        if flat.n_children[v] == 1 and not flat.modes[v].any():
            has_exit = v != 0 or exit_external or (root_line_internal_from is not None)
            if has_exit:
                found.append((frozenset([v]), v))
    levels = sorted({int(s) for s in flat.scale[1:]})
    if max_level is not None:
        levels = [s for s in levels if s < max_level]
    for s in levels:
        # union nodes joined by lines of scale <= s
        comp_id = list(range(N))

        def find(i):
            while comp_id[i] != i:
                comp_id[i] = comp_id[comp_id[i]]
                i = comp_id[i]
            return i

        for i in range(1, N):
            if flat.scale[i] <= s:
                comp_id[find(i)] = find(flat.parent[i])
        groups = {}
        for i in range(N):
            groups.setdefault(find(i), []).append(i)
        for members in groups.values():
            if len(members) < 2:
                continue
            mset = set(members)
            top = min(members)  # pre-order: the top node comes first
            # exiting line
            if top == 0:
                if exit_external:
                    has_exit = True
                else:
                    has_exit = root_line_internal_from is not None and root_line_internal_from > s
            else:
                has_exit = True
            if not has_exit:
                continue
            entering = sum(1 for i in range(1, N) if flat.parent[i] in mset and i not in mset)
            if flat.leg_node in mset:
                entering += 1
            if entering != 1:
                continue
            if flat.modes[members].sum(axis=0).any():
                continue
            if require_ii:
                # path from the entering line up to the exit, inside the cluster
                ent = [i for i in range(1, N) if flat.parent[i] in mset and i not in mset]
                low = flat.parent[ent[0]] if ent else flat.leg_node
                ok = True
                i = low
                while i != top:
                    # line leaving i is on the path; nu0 = sum of cluster modes below
                    sub = [w for w in members if _below(flat, w, i)]
                    if not flat.modes[sub].sum(axis=0).any():
                        ok = False
                        break
                    i = flat.parent[i]
                if not ok:
                    continue
            found.append((frozenset(members), top))
    # de-duplicate (the same node set can appear at several levels)
    uniq = {}
    for ns, top in found:
        uniq[ns] = top
    return list(uniq.items())


def _below(flat: Flat, w, v):
    """True when ``w`` is ``v`` or a descendant of ``v``."""
    while w >= 0:
        if w == v:
            return True
        w = flat.parent[w]
    return False


# --------------------------------------------------------------------------
# self-energy clusters of the plain expansion

@dataclass
class ClusterTerm:
    """One cluster structure: node-factor product and line momenta."""

    u: int
    e: int
    order: int
    factor: BetaPoly
    path_nu0: list          # nu0 of the path lines
    other_nu: list          # momenta of the remaining internal lines
    structure: Node = field(repr=False, default=None)


class ClusterEnumerator:
    """Self-energy cluster structures (scales summed analytically).

    With ``require_ii`` the path momenta must differ from the entering
    momentum, as in the plain expansion.
    """

    def __init__(self, f: TrigPoly, scales: ScaleSystem, require_ii: bool = True,
                 budget: int = DEFAULT_TREE_BUDGET):
        self.f = f
        self.d = f.d
        self.scales = scales
        self.omega = np.array(scales.freq.omega)
        self.nf = NodeFactors(f)
        self.require_ii = require_ii
        self.budget = budget
        self._plain = {}
        self._leg = {}
        self._terms = {}
        self._count = 0

    def _bump(self, n):
        self._count += n
        if self._count > self.budget:
            raise BudgetError(f"cluster enumeration exceeded the budget of {self.budget} structures")

    def _build(self, j, with_leg, root=False):
        d = self.d
        pool = sorted((it for o in range(1, j) for it in self.plain(o)), key=lambda n: n.order)
        out = []
        for mode in sorted(self.nf.modes):
            if with_leg:
                heads = [Leg(e) for e in range(d + 1)] + [it for o in range(1, j) for it in self.leg(o)]
            else:
                heads = [None]
            for head in heads:
                rest = j - 1 - (head.order if head is not None else 0)
                if rest < 0:
                    continue
                for kids in _multisets(pool, rest):
                    allk = kids + ([head] if head is not None else [])
                    mom = np.array(mode) + sum((np.array(c.momentum) for c in allk if isinstance(c, Node)),
                                               np.zeros(d, int))
                    if root:
                        if mom.any():
                            continue
                    elif not with_leg or self.require_ii:
                        if not mom.any():
                            continue
                    child_comps = [c.comp for c in allk]
                    children = sort_children(allk)
                    for comp in range(d + 1):
                        if self.nf.nonzero(mode, comp, child_comps):
                            out.append(Node(tuple(mode), comp, UNSET, children))
        self._bump(len(out))
        return out

    def plain(self, j):
        if j not in self._plain:
            self._plain[j] = self._build(j, with_leg=False)
        return self._plain[j]

    def leg(self, j):
        if j not in self._leg:
            self._leg[j] = self._build(j, with_leg=True)
        return self._leg[j]

    def structures(self, k):
        """All cluster structures of order ``k`` (root momentum zero)."""
        return self._build(k, with_leg=True, root=True)

    def terms(self, k):
        """``ClusterTerm`` list for order ``k`` (scale -1 term included at k=1)."""
        if k in self._terms:
            return self._terms[k]
        out = []
        for s in self.structures(k):
            out.append(self._term(s))
        self._terms[k] = out
        return out

    def _term(self, root: Node) -> ClusterTerm:
        factor = BetaPoly.const(1.0)
        path_nu0, other = [], []
        e = None

        def visit(node, is_root):
            nonlocal factor, e
            kids = node.children
            fac = self.nf.factor(node.mode, node.comp, [c.comp for c in kids])
            factor = factor * fac.scale(1.0 / symmetry_factor(kids))
            if not is_root:
                (path_nu0 if node.has_leg else other).append(node.momentum)
            for c in kids:
                if isinstance(c, Leg):
                    e = c.comp
                else:
                    visit(c, False)

        visit(root, True)
        return ClusterTerm(u=root.comp, e=e, order=root.order, factor=factor,
                           path_nu0=path_nu0, other_nu=other, structure=root)

    # values ------------------------------------------------------------------
    def _line_jets(self, y, n):
        """Jet of ``S_n(y)/y^2`` with ``S_n = sum_{p<=n} Psi_p``; ``n = -1`` gives 0."""
        s0, s1, s2 = self.scales.cumulative_jet(n, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / y**2
            inv1 = -2.0 / y**3
            inv2 = 6.0 / y**4
        v0 = np.where(s0 != 0, s0 * inv, 0.0)
        v1 = np.where((s0 != 0) | (s1 != 0), s1 * inv + s0 * inv1, 0.0)
        v2 = np.where((s0 != 0) | (s1 != 0) | (s2 != 0), s2 * inv + 2 * s1 * inv1 + s0 * inv2, 0.0)
        return Jet2(np.nan_to_num(v0), np.nan_to_num(v1), np.nan_to_num(v2))

    def _term_jet(self, t: ClusterTerm, x, n):
        """Jet in ``x`` of ``prod_lines S_n(y)/y^2`` for one structure."""
        x = np.asarray(x, dtype=float)
        out = Jet2(np.ones_like(x), np.zeros_like(x), np.zeros_like(x))
        for nu0 in t.path_nu0:
            out = out * self._line_jets(float(self.omega @ np.array(nu0)) + x, n)
        for nu in t.other_nu:
            j = self._line_jets(np.array(float(self.omega @ np.array(nu))), n)
            out = out * float(j.value)
        return out

    def cumulative(self, k, x, n, beta0):
        """``MM^(k)(x, n)`` as a Jet2 with value shape ``x.shape + (d+1, d+1)``.

        The scale -1 cluster is included for every ``n >= -1``.
        """
        x = np.asarray(x, dtype=float)
        D = self.d + 1
        shape = x.shape + (D, D)
        v0, v1, v2 = (np.zeros(shape, complex) for _ in range(3))
        for t in self.terms(k):
            c = complex(t.factor.eval(beta0))
            if c == 0:
                continue
            if not t.path_nu0 and not t.other_nu:
                v0[..., t.u, t.e] += c  # single node, scale -1
                continue
            if n < 0:
                continue
            j = self._term_jet(t, x, n)
            v0[..., t.u, t.e] += c * j.value
            v1[..., t.u, t.e] += c * j.d1
            v2[..., t.u, t.e] += c * j.d2
        return Jet2(v0, v1, v2)

    def at_scale(self, k, x, n, beta0):
        """``M^(k)(x, n)``: clusters whose largest internal scale is exactly ``n``."""
        if n == -1:
            return self.cumulative(k, x, -1, beta0)
        hi = self.cumulative(k, x, n, beta0)
        lo = self.cumulative(k, x, n - 1, beta0)
        return hi - lo

    def sample_x(self, k, n, count, rng=None):
        """``x`` values at which some path line sits on scale ``n``.

        Points are ``-omega.nu0 + y`` with ``|y|`` drawn inside the open
        support of ``Psi_n``; signs alternate so both ``x`` and ``-x`` occur.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        centres = self.path_centres(k) or [0.0]
        lo = self.scales.alpha_scale(n) / 16.0
        hi = min(self.scales.alpha_scale(n - 1) / 8.0, 1.0) if n > 0 else 1.0
        out = []
        for i in range(count):
            c = centres[i % len(centres)]
            y = rng.uniform(lo, hi) * (1 if i % 2 == 0 else -1)
            out.append(c + y)
        return np.array(out)

    def path_centres(self, k):
        """Values ``-omega.nu0`` over all path lines at order ``k``."""
        out = set()
        for t in self.terms(k):
            for nu0 in t.path_nu0:
                out.add(-float(self.omega @ np.array(nu0)))
        return sorted(out)


def self_energy_matrix(k, n, x, f, scales, beta0, cumulative=False, enumerator=None):
    """Jet2-valued ``M^(k)(x, n)`` (or ``MM^(k)(x, n)`` when ``cumulative``).

    Entry ``[..., u, e]``; see ``ClusterEnumerator``.
    """
    ce = enumerator or ClusterEnumerator(f, scales)
    return ce.cumulative(k, x, n, beta0) if cumulative else ce.at_scale(k, x, n, beta0)


# --------------------------------------------------------------------------
# verification suites

def _report(name, k, dev, tol, scale=1.0, **extra):
    dev = float(dev)
    return {"check": name, "k": k, "max_deviation": dev, "tolerance": tol,
            "scale": float(scale), "pass": bool(dev <= tol * max(scale, 1.0)), **extra}


def verify_zero_mode_link(k, table, ce: ClusterEnumerator, beta0s, tol=1e-9):
    """Compare ``MM^(k)(0)`` with beta0-derivatives of order ``k-1`` zero modes.

    ``MM^(k)(0)`` is the ``n = n_max`` value; at fixed order every cluster is
    finite so the partial sum is exact once ``n_max`` exceeds the largest
    scale a line can reach.  Alpha0-derivatives of zero modes vanish since
    the total momentum is zero.
    """
    d = table.d
    n = ce.scales.n_max
    Gd = table.G(k - 1).deriv(1)
    Fd = [p.deriv(1) for p in table.F(k - 1)]
    out = []
    devs = {"beta_beta": 0.0, "alpha_beta": 0.0, "beta_alpha": 0.0, "alpha_alpha": 0.0}
    for b0 in beta0s:
        M = ce.cumulative(k, np.array(0.0), n, b0).value
        devs["beta_beta"] = max(devs["beta_beta"], abs(M[d, d] - Gd.eval(b0)))
        for i in range(d):
            devs["alpha_beta"] = max(devs["alpha_beta"], abs(M[i, d] - Fd[i].eval(b0)))
            devs["beta_alpha"] = max(devs["beta_alpha"], abs(M[d, i]))
            for j in range(d):
                devs["alpha_alpha"] = max(devs["alpha_alpha"], abs(M[i, j]))
    for name, dev in devs.items():
        out.append(_report(f"zero_mode_link_{name}", k, dev, tol))
    return out


def verify_transpose_symmetries(k, ce: ClusterEnumerator, n, xs, beta0, tol=1e-9):
    """Transpose/parity/conjugation relations of ``M^(k)(x, n)`` and
    ``MM^(k)(x, n)`` at the sample points ``xs``.

    Deviations are relative to ``max(1, max |entry|)``.
    """
    d = ce.d
    xs = np.asarray(xs, dtype=float)
    A, B = slice(0, d), d
    out = []
    for kind, fun in (("single", ce.at_scale), ("cumulative", ce.cumulative)):
        Mp = fun(k, xs, n, beta0).value
        Mm = fun(k, -xs, n, beta0).value
        mag = float(np.abs(Mp).max())
        norm = max(mag, 1.0)
        dev_a = max(np.abs(Mp[:, A, A] - np.swapaxes(Mm[:, A, A], 1, 2)).max(),
                    np.abs(Mp[:, A, A] - np.conj(np.swapaxes(Mp[:, A, A], 1, 2))).max())
        dev_b = max(np.abs(Mp[:, B, B] - Mm[:, B, B]).max(), np.abs(Mp[:, B, B] - np.conj(Mp[:, B, B])).max())
        dev_c = max(np.abs(Mp[:, A, B] + Mm[:, B, A]).max(), np.abs(Mp[:, A, B] + np.conj(Mp[:, B, A])).max())
        for name, dev in (("alpha_alpha", dev_a), ("beta_beta", dev_b), ("alpha_beta", dev_c)):
            out.append(_report(f"transpose_{name}_{kind}", k, dev / norm, tol, n=n, magnitude=mag))
    return out


def verify_derivative_zeros(k, ce: ClusterEnumerator, n, beta0, tol=1e-9):
    """``d_x MM(0, n)`` structure: alpha-alpha and beta-beta vanish, the
    mixed blocks satisfy ``d MM_{a,b}(0) = -conj(d MM_{b,a}(0))``."""
    d = ce.d
    J = ce.cumulative(k, np.array(0.0), n, beta0)
    D1 = J.d1
    dev_aa = np.abs(D1[:d, :d]).max()
    dev_bb = abs(D1[d, d])
    dev_ab = np.abs(D1[:d, d] + np.conj(D1[d, :d])).max()
    return [
        _report("dx_alpha_alpha_at_zero", k, dev_aa, tol, n=n),
        _report("dx_beta_beta_at_zero", k, dev_bb, tol, n=n),
        _report("dx_mixed_at_zero", k, dev_ab, tol, n=n),
    ]


def decomposition_check(k, ce: ClusterEnumerator, n, xs, beta0, n_quad=128):
    """Rebuild ``MM(x, n)`` from ``L + x D + x^2 d(x) + R(x, n)``.

    ``d(x)`` is the integral remainder of the ``n_max`` self-energy,
    evaluated by Gauss-Legendre quadrature; returns the max residual.
    """
    nmax = ce.scales.n_max
    xs = np.asarray(xs, dtype=float)
    J0 = ce.cumulative(k, np.array(0.0), nmax, beta0)
    L, D = J0.value, J0.d1
    tau, w = np.polynomial.legendre.leggauss(n_quad)
    tau = 0.5 * (tau + 1.0)
    w = 0.5 * w
    res = 0.0
    for x in xs:
        d2 = ce.cumulative(k, tau * x, nmax, beta0).d2
        dd = np.tensordot(w * (1 - tau), d2, axes=(0, 0))
        full = ce.cumulative(k, np.array(x), nmax, beta0).value
        part = ce.cumulative(k, np.array(x), n, beta0).value
        recon = L + x * D + x * x * dd + (part - full)
        res = max(res, float(np.abs(recon - part).max()))
    return res


def slope_identity_report(k, table, ce: ClusterEnumerator, beta0):
    """Optional diagnostic: ``omega . D_{alpha,beta}`` against both index
    conventions of the zero-mode bracket.  Reported, never asserted."""
    d = ce.d
    J0 = ce.cumulative(k, np.array(0.0), ce.scales.n_max, beta0)
    lhs = complex(np.dot(ce.omega, J0.d1[:d, d]))
    out = {"k": k, "lhs": [lhs.real, lhs.imag]}
    for label, kk in (("same_order", k), ("previous_order", k - 1)):
        if 0 <= kk <= table.K:
            rhs = 2j * (k - 1) * table.G(kk).eval(beta0)
            out[label] = {"rhs": [rhs.real, rhs.imag], "deviation": abs(lhs - rhs)}
    return out


# --------------------------------------------------------------------------
# counting diagnostics

def minimum_scale(scales: ScaleSystem, y):
    return scales.minimum_scale(y)


def counting_diagnostics(flat: Flat, scales: ScaleSystem, omega, x=0.0, *, is_cluster=False,
                         root_scale=None, require_ii=True):
    """Counts ``K``, ``N_n`` and ``N*_n`` for a labelled tree or cluster.

    ``N*_n`` counts non-resonant lines whose minimum scale is ``>= n``.
    For clusters ``x`` is the entering momentum ``omega . nu'``; path lines
    then carry ``omega . nu0 + x``.
    """
    N = len(flat.parent)
    K = int(np.abs(flat.modes).sum())
    lines = []  # (node index, y)
    for i in range(N):
        if i == 0 and is_cluster:
            continue
        mom = flat.momentum[i]
        y = float(np.dot(omega, mom)) + (x if flat.on_path[i] else 0.0)
        if i == 0 and not is_cluster and not mom.any():
            continue  # zero-momentum root line has no minimum scale
        lines.append((i, y))
    clusters = find_self_energy_clusters(
        flat, root_line_internal_from=None if is_cluster else root_scale,
        exit_external=is_cluster, require_ii=require_ii)
    resonant = {top for _, top in clusters}
    n_max = scales.n_max
    Nn = [sum(1 for i, _ in lines if flat.scale[i] >= n) for n in range(n_max + 1)]
    zetas = {i: scales.minimum_scale(y) for i, y in lines}
    Nb = []
    for n in range(n_max + 1):
        Nb.append(sum(1 for i, _ in lines if i not in resonant and zetas[i] is not None and zetas[i] >= n))
    return {"K": K, "N": Nn, "N_bullet": Nb, "resonant": sorted(resonant)}


def counting_check_trees(te: TreeEnumerator, k_max, tol_violations=0):
    """Check ``N*_n <= 2^-(m_n - 2) K`` over all labelled trees with nonzero value."""
    sc = te.scales
    viol, checked = [], 0
    for k in range(1, k_max + 1):
        candidates = list(te.items(k)) + [t for t in te._roots(k, require_nonzero=False) if not any(t.momentum)]
        for t in candidates:
            if not te.value(t):
                continue
            checked += 1
            flat = flatten(t)
            diag = counting_diagnostics(flat, sc, te.omega, root_scale=t.scale)
            for n in range(sc.n_max + 1):
                bound = 2.0 ** (-(sc.m_seq[n] - 2)) * diag["K"]
                if diag["N_bullet"][n] > bound:
                    viol.append({"k": k, "n": n, "tree": repr(t.key()), "N_bullet": diag["N_bullet"][n], "bound": bound})
    return {"checked": checked, "violations": viol}


def _labelled_clusters(ce: ClusterEnumerator, k, n):
    """Attach scale labels ``<= n`` (max exactly ``n``) to cluster structures."""
    import itertools
    for t in ce.terms(k):
        if not t.path_nu0 and not t.other_nu:
            continue
        flat = flatten(t.structure)
        N = len(flat.parent)
        idx = list(range(1, N))
        for labels in itertools.product(range(n + 1), repeat=len(idx)):
            if max(labels) != n:
                continue
            sc = flat.scale.copy()
            sc[1:] = labels
            yield t, Flat(flat.modes, flat.parent, flat.comp, sc, flat.n_children,
                          flat.leg_node, flat.momentum, flat.on_path)


def counting_check_clusters(ce: ClusterEnumerator, k_max, n_values, xs_per_scale=41):
    """Cluster counting bounds for labelled clusters with nonzero value.

    For a cluster on scale ``n`` inside a tree the entering line has scale
    ``> n``, so ``|x| < alpha_{m_n}/8``; ``x`` is sampled on that range.
    """
    sc = ce.scales
    omega = ce.omega
    viol, checked = [], 0
    for n in n_values:
        xs = np.linspace(-1, 1, xs_per_scale) * sc.alpha_scale(n) / 8.0
        for k in range(2, k_max + 1):
            for t, flat in _labelled_clusters(ce, k, n):
                for x in xs:
                    ok = True
                    for i in range(1, len(flat.parent)):
                        y = float(np.dot(omega, flat.momentum[i])) + (x if flat.on_path[i] else 0.0)
                        if sc.Psi(int(flat.scale[i]), y) == 0.0:
                            ok = False
                            break
                    if not ok or t.factor.max_abs() == 0:
                        continue
                    checked += 1
                    diag = counting_diagnostics(flat, sc, omega, x=x, is_cluster=True)
                    if not diag["K"] > 2.0 ** (sc.m_seq[n] - 1):
                        viol.append({"k": k, "n": n, "x": float(x), "K": diag["K"], "kind": "K"})
                    for p in range(n + 1):
                        bound = 2.0 ** (-(sc.m_seq[p] - 3)) * diag["K"]
                        if diag["N_bullet"][p] > bound:
                            viol.append({"k": k, "n": n, "p": p, "x": float(x), "kind": "N_bullet"})
    return {"checked": checked, "violations": viol}
