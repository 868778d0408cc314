"""Renormalised expansion: scale-recursive self-energies and propagators.

Every quantity is an array whose trailing axis holds a truncated bivariate
series in ``(eps, t)``, ``t`` being a displacement of the line momentum
``x``.  The flattened index is ``e * NJ + j`` with ``e < NE`` the eps-order
and ``j < NJ = 3`` the Taylor order in ``t``.  In symbolic mode
``NE = K + 1`` and each node carries one power of ``eps``; in numeric mode
``NE = 1`` and each node is multiplied by the numeric ``eps``.

Propagators act on node vectors as ``c = G @ V`` (row index: component
seen by the parent node, column index: component of the emitting node),
so self-energies ``M[u, e]`` chain as ordinary matrix products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PropertyOneViolation
from .fourier import TrigPoly
from .smalldiv import ScaleSystem
from .trees import (UNSET, Leg, Node, _multisets, find_self_energy_clusters, flatten,
                    sort_children, symmetry_factor)

NJ = 3


def _product_tensor(NE: int) -> np.ndarray:
    N = NE * NJ
    T = np.zeros((N, N, N))
    for a in range(NE):
        for b in range(NE - a):
            for i in range(NJ):
                for j in range(NJ - i):
                    T[a * NJ + i, b * NJ + j, (a + b) * NJ + i + j] = 1.0
    return T


class SeriesAlgebra:
    """Truncated products, matrix products and inverses of (eps, t) series."""

    def __init__(self, NE: int):
        self.NE = NE
        self.N = NE * NJ
        self.T = _product_tensor(NE)

    def zero(self, *shape):
        return np.zeros(shape + (self.N,), complex)

    def one(self, *shape):
        out = self.zero(*shape)
        out[..., 0] = 1.0
        return out

    def identity(self, D):
        out = self.zero(D, D)
        out[np.arange(D), np.arange(D), 0] = 1.0
        return out

    def mul(self, p, q):
        return np.einsum("...m,...n,mnk->...k", p, q, self.T)

    def matmul(self, A, B):
        return np.einsum("ikm,kjn,mnp->ijp", A, B, self.T)

    def jet(self, v, d1, d2):
        """Constant-in-eps series from value and derivatives."""
        out = self.zero()
        out[0], out[1], out[2] = v, d1, 0.5 * d2
        return out

    def shift_eps(self, p):
        out = np.zeros_like(p)
        if self.NE > 1:
            out[..., NJ:] = p[..., :-NJ]
        return out

    def inverse(self, A):
        """Inverse of the series matrix ``A`` (needs ``A_00`` invertible)."""
        D = A.shape[0]
        Ar = A.reshape(D, D, self.NE, NJ)
        try:
            A00i = np.linalg.inv(Ar[:, :, 0, 0])
        except np.linalg.LinAlgError as exc:
            raise PropertyOneViolation("singular leading coefficient in x^2 1 - M") from exc
        if not np.all(np.isfinite(A00i)):
            raise PropertyOneViolation("non-finite inverse of x^2 1 - M")
        G = np.zeros_like(Ar)
        for e in range(self.NE):
            for j in range(NJ):
                if e == 0 and j == 0:
                    G[:, :, 0, 0] = A00i
                    continue
                acc = np.zeros((D, D), complex)
                for e1 in range(e + 1):
                    for j1 in range(j + 1):
                        if e1 == 0 and j1 == 0:
                            continue
                        acc += Ar[:, :, e1, j1] @ G[:, :, e - e1, j - j1]
                G[:, :, e, j] = -A00i @ acc
        return G.reshape(D, D, self.N)

    def order(self, p, e):
        """Taylor coefficients in ``t`` of eps-order ``e``."""
        return p[..., e * NJ:(e + 1) * NJ]

    def sum_orders(self, p, eps):
        """Evaluate the eps-series at a number (numeric mode: identity)."""
        r = p.reshape(p.shape[:-1] + (self.NE, NJ))
        w = np.array([eps**e for e in range(self.NE)])
        return np.tensordot(r, w, axes=([-2], [0]))


# --------------------------------------------------------------------------
# renormalised structures

class RenormalisedEnumerator:
    """Skeletons (modes and scales; components summed) of renormalised
    trees and self-energy clusters.

    Self-energy clusters drop the path-momentum constraint and reject any
    nested self-energy cluster, including single zero-mode nodes with one
    entering line.
    """

    def __init__(self, f: TrigPoly, scales: ScaleSystem, K: int):
        self.f = f
        self.d = f.d
        self.scales = scales
        self.omega = np.array(scales.freq.omega)
        self.modes = sorted(f.mode_map())
        self.K = K
        self._cache = {}

    def _scales_for(self, mom, cap, path):
        if path:
            return list(range(cap + 1))
        if not any(mom):
            return []
        y = float(self.omega @ np.array(mom))
        return [n for n in self.scales.admissible_scales(y) if n <= cap]

    def _items(self, j, cap, with_leg):
        key = ("item", j, cap, with_leg)
        if key in self._cache:
            return self._cache[key]
        out = []
        for node in self._heads(j, cap, with_leg):
            mom = node.momentum
            if not with_leg and not any(mom):
                continue
            for s in self._scales_for(mom, cap, with_leg):
                out.append(node.with_labels(scale=s))
        self._cache[key] = out
        return out

    def _heads(self, j, cap, with_leg):
        """Unlabelled-line nodes of order ``j``."""
        pool = sorted((it for o in range(1, j) for it in self._items(o, cap, False)), key=lambda n: n.order)
        leg_heads = [None]
        if with_leg:
            leg_heads = [Leg()] + [it for o in range(1, j) for it in self._items(o, cap, True)]
        out = []
        for mode in self.modes:
            for head in leg_heads:
                rest = j - 1 - (head.order if head is not None else 0)
                if rest < 0:
                    continue
                for kids in _multisets(pool, rest):
                    allk = kids + ([head] if head is not None else [])
                    if not any(mode) and len(allk) == 1:
                        continue  # scale -1 self-energy cluster
                    out.append(Node(tuple(mode), UNSET, UNSET, sort_children(allk)))
        return out

    def clusters(self, n):
        """Renormalised self-energy clusters on scale ``n`` (orders 2..K)."""
        key = ("cl", n)
        if key in self._cache:
            return self._cache[key]
        out = []
        for k in range(2, self.K + 1):
            for root in self._heads(k, n, True):
                if any(root.momentum):
                    continue
                flat = flatten(root)
                if int(flat.scale[1:].max()) != n:
                    continue
                if find_self_energy_clusters(flat, None, True, False, max_level=n):
                    continue
                out.append(root)
        self._cache[key] = out
        return out

    def trees(self, k, nu, cap=None):
        """Renormalised trees of order ``k`` and root momentum ``nu``
        (components summed); root lines with ``nu = 0`` have scale -1."""
        cap = self.scales.n_max if cap is None else cap
        nu = tuple(nu)
        key = ("tr", k, nu, cap)
        if key in self._cache:
            return self._cache[key]
        out = []
        for root in self._heads(k, cap, False):
            if root.momentum != nu:
                continue
            if any(nu):
                labs = self._scales_for(nu, cap, False)
            else:
                labs = [-1]
            for s in labs:
                t = root.with_labels(scale=s)
                if find_self_energy_clusters(flatten(t), s, False, False):
                    continue
                out.append(t)
        self._cache[key] = out
        return out


# --------------------------------------------------------------------------
# state

@dataclass
class ResumState:
    """Renormalised (or regularised) expansion at fixed ``eps`` and ``beta0``.

    ``symbolic=True`` tracks eps-orders up to ``K`` exactly; ``eps`` is
    then only used by ``numeric`` helpers.  ``regularised`` needs numeric
    mode.  ``k0`` enters the regularisation argument ``Delta``.
    """

    f: TrigPoly
    scales: ScaleSystem
    K: int
    eps: float
    beta0: float
    symbolic: bool = False
    regularised: bool = False
    k0: int = 0
    convex_sign_flip: bool = False
    n_max: int | None = None
    log: list = field(default_factory=list)

    def __post_init__(self):
        if self.regularised and self.symbolic:
            raise ValueError("the regularised expansion is numeric only")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        self.n_max = self.scales.n_max if self.n_max is None else min(self.n_max, self.scales.n_max)
        self.d = self.f.d
        self.D = self.d + 1
        self.omega = np.array(self.scales.freq.omega)
        self.alg = SeriesAlgebra(self.K + 1 if self.symbolic else 1)
        self.enum = RenormalisedEnumerator(self.f, self.scales, self.K)
        fm = self.f.mode_map()
        self._fm = fm
        self._dcache = {}
        self._G = {}
        self._M = {}
        self._delta = {}
        self._xi = {-1: 1.0}
        self.s_beta = -1.0 if self.convex_sign_flip else 1.0
        self._sub = None
        if self.regularised and self.k0 > 0:
            # eps-orders below k0 of MMbar_bb(0) coincide with the plain ones
            self._sub = ResumState(self.f, self.scales, max(self.k0 - 1, 1), self.eps, self.beta0,
                                   symbolic=True, convex_sign_flip=self.convex_sign_flip, n_max=self.n_max)

    # basic pieces -----------------------------------------------------------
    def fderiv(self, mode, q):
        key = (mode, q)
        if key not in self._dcache:
            bp = self._fm.get(mode)
            self._dcache[key] = complex(bp.deriv(q).eval(self.beta0)) if bp is not None else 0.0
        return self._dcache[key]

    def _eps_weight(self, V):
        return self.alg.shift_eps(V) if self.symbolic else V * self.eps

    def M_minus1(self):
        D = self.D
        out = self.alg.zero(D, D)
        c = self.s_beta * self.fderiv(tuple([0] * self.d), 2)
        out[self.d, self.d] = self._eps_weight(self.alg.one() * c)
        return out

    # propagators ------------------------------------------------------------
    def propagator(self, n, y):
        """``G^[n](y)`` as a series matrix (Taylor in a shift of ``y``)."""
        alg = self.alg
        if n == -1:
            return alg.identity(self.D)
        y = float(y)
        key = (n, y)
        if key in self._G:
            return self._G[key]
        p0, p1, p2 = self.scales.Psi_jet(n, y)
        if p0 == 0 and p1 == 0 and p2 == 0:
            out = alg.zero(self.D, self.D)
        else:
            MM = self.MM(n - 1, y)
            if self.regularised:
                MM = MM * self.xi(n - 1)
            A = -MM
            for i in range(self.D):
                A[i, i] = A[i, i] + alg.jet(y * y, 2 * y, 2.0)
            out = alg.mul(alg.inverse(A), alg.jet(float(p0), float(p1), float(p2)))
        self._G[key] = out
        return out

    def MM(self, n, x):
        """``MM^[n](x) = sum_{q=-1}^{n} chi_q(x) M^[q](x)``."""
        alg = self.alg
        out = self.M_minus1().copy()
        for q in range(0, n + 1):
            c0, c1, c2 = self.scales.chi_jet(q, x)
            if c0 == 0 and c1 == 0 and c2 == 0:
                continue
            out = out + alg.mul(self.M(q, x), alg.jet(float(c0), float(c1), float(c2)))
        return out

    def M(self, n, x):
        """``M^[n](x)``: renormalised self-energy clusters on scale ``n``."""
        if n == -1:
            return self.M_minus1()
        x = float(x)
        key = (n, x)
        if key in self._M:
            return self._M[key]
        out = self.alg.zero(self.D, self.D)
        for root in self.enum.clusters(n):
            V = self._value(root, x)
            if V is not None:
                out = out + V
        self._M[key] = out
        return out

    # regularisation -----------------------------------------------------------
    def delta(self, n):
        """``Delta_n``: ``MMbar^[n]_bb(0)`` minus its eps-orders below ``k0``."""
        if n in self._delta:
            return self._delta[n]
        val = complex(self.alg.sum_orders(self.MM(n, 0.0)[self.d, self.d], self.eps)[0])
        if self._sub is not None:
            sub = self._sub.MM(n, 0.0)[self.d, self.d]
            orders = sub.reshape(self._sub.alg.NE, NJ)[:, 0]
            val -= sum(self.eps**k * orders[k] for k in range(min(self.k0, len(orders))))
        self._delta[n] = val
        return val

    def xi(self, n):
        if n in self._xi:
            return self._xi[n]
        dv = self.delta(n)
        v = self.scales.xi(n, dv.real)
        self.log.append({"n": n, "Delta": [dv.real, dv.imag], "xi": float(v)})
        self._xi[n] = float(v)
        return self._xi[n]

    # values -----------------------------------------------------------------
    def _value(self, node: Node, x):
        """Node vector ``V`` of shape ``(D, W, N)`` or ``None`` when zero.

        ``x`` is the entering momentum of a cluster (``None`` for trees);
        ``W = D`` on the path to the entering line, else 1.
        """
        alg, d, D = self.alg, self.d, self.D
        nu = np.array(node.mode)
        inu = 1j * nu
        poly = [alg.one(1)]
        for c in node.children:
            if isinstance(c, Leg):
                cv = alg.identity(D)
            else:
                Vc = self._value(c, x)
                if Vc is None:
                    return None
                path = c.has_leg
                y = float(self.omega @ np.array(c.momentum)) + (x if path else 0.0)
                G = self.propagator(c.scale, y)
                if not path:
                    G = G * _constant_mask(alg)
                cv = alg.matmul(G, Vc)
                if not cv.any():
                    return None
            a = np.tensordot(inu, cv[:d], axes=(0, 0))
            b = cv[d]
            new = [None] * (len(poly) + 1)
            for q, pq in enumerate(poly):
                ta = alg.mul(pq, a)
                tb = alg.mul(pq, b)
                new[q] = ta if new[q] is None else new[q] + ta
                new[q + 1] = tb
            poly = new
        W = max(p.shape[0] for p in poly)
        V = alg.zero(D, W)
        sym = symmetry_factor(node.children)
        sa = 0.0
        sb = 0.0
        for q, pq in enumerate(poly):
            pq = np.broadcast_to(pq, (W, alg.N))
            sa = sa + pq * self.fderiv(node.mode, q)
            sb = sb + pq * self.fderiv(node.mode, q + 1)
        for i in range(d):
            if nu[i] != 0:
                V[i] = -inu[i] * sa
        V[d] = self.s_beta * sb
        V = self._eps_weight(V / sym)
        return V if V.any() else None

    def tree_sum(self, k, nu, cap=None):
        """``eps^k``-weighted sum of renormalised trees: vector over components."""
        alg = self.alg
        out = alg.zero(self.D)
        for t in self.enum.trees(k, nu, cap):
            V = self._value(t, None)
            if V is None:
                continue
            y = float(self.omega @ np.array(t.momentum))
            G = self.propagator(t.scale, y) * _constant_mask(alg)
            out = out + alg.matmul(G, V)[:, 0]
        return out


def _constant_mask(alg: SeriesAlgebra):
    m = np.zeros(alg.N)
    m[::NJ] = 1.0
    return m


def build_resum(f, freq, scales, K, n_max=None, eps=0.0, beta0=0.0, *, symbolic=False,
                regularised=False, k0=0, convex_sign_flip=False) -> ResumState:
    if freq.d != f.d:
        raise ValueError("frequency and perturbation dimensions differ")
    return ResumState(f=f, scales=scales, K=K, eps=eps, beta0=beta0, symbolic=symbolic,
                      regularised=regularised, k0=k0, convex_sign_flip=convex_sign_flip, n_max=n_max)


def propagator(state: ResumState, n, x):
    """Numeric value matrix of ``G^[n](x)`` (eps-orders summed)."""
    G = state.propagator(n, x)
    return state.alg.sum_orders(G, state.eps)[..., 0]


def matrix_jet(state: ResumState, n, x):
    """``MM^[n](x)`` as ``(value, d1, d2)`` arrays of shape ``(NE, D, D)``.

    Symbolic states return one slice per eps-order; numeric states one.
    """
    S = state.MM(n, x).reshape(state.D, state.D, state.alg.NE, NJ)
    v = np.moveaxis(S[..., 0], -1, 0)
    d1 = np.moveaxis(S[..., 1], -1, 0)
    d2 = 2 * np.moveaxis(S[..., 2], -1, 0)
    return v, d1, d2


# --------------------------------------------------------------------------
# resummed coefficients

@dataclass
class ResummedTable:
    """Resummed coefficients at fixed ``beta0``.

    ``coeffs[(k, nu)]`` and ``zero[k]`` hold series arrays ``(D, N)`` of
    the ``eps^k``-weighted order-``k`` contributions; ``zero[k]`` collects
    order-``(k+1)`` trees with the root weight ``eps^(k+1)``.
    """

    state: ResumState
    coeffs: dict
    zero: dict

    def total(self, nu):
        """Sum over orders of the contributions with momentum ``nu``."""
        acc = self.state.alg.zero(self.state.D)
        for (k, mu), v in self.coeffs.items():
            if mu == tuple(nu):
                acc = acc + v
        return acc

    def eps_order(self, nu, K):
        """eps^K coefficient of the total (symbolic states)."""
        tot = self.total(nu)
        return self.state.alg.order(tot, K)[:, 0]

    def zero_order(self, K):
        """eps^(K+1) coefficient of the zero-mode sum (plain order-K bracket)."""
        acc = self.state.alg.zero(self.state.D)
        for v in self.zero.values():
            acc = acc + v
        if K + 1 >= self.state.alg.NE:
            raise ValueError("order beyond the tracked truncation")
        return self.state.alg.order(acc, K + 1)[:, 0]


def resummed_coeffs(state: ResumState, K, nu_set, cap=None) -> ResummedTable:
    coeffs = {}
    for k in range(1, K + 1):
        for nu in nu_set:
            nu = tuple(nu)
            if not any(nu):
                continue
            coeffs[(k, nu)] = state.tree_sum(k, nu, cap)
    zero = {}
    zero_nu = tuple([0] * state.d)
    for k in range(0, K):
        zero[k] = state.tree_sum(k + 1, zero_nu, cap)
    return ResummedTable(state, coeffs, zero)


def bifurcation_sequence(state: ResumState, K):
    """``G^{R,n}`` for ``n = 0..n_max`` (numeric), with Cauchy increments.

    Uses renormalised zero-mode trees of orders ``1..K+1`` whose lines all
    have scale ``<= n``; divided by ``eps`` to match the bracket convention.
    """
    if state.symbolic:
        raise ValueError("numeric state required")
    zero_nu = tuple([0] * state.d)
    vals = []
    for n in range(0, state.n_max + 1):
        tot = 0j
        for k in range(1, K + 2):
            tot += complex(state.tree_sum(k, zero_nu, cap=n)[state.d, 0])
        vals.append(tot / state.eps if state.eps else 0j)
    inc = [abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1)]
    return {"G": [[v.real, v.imag] for v in vals], "increments": inc}


# --------------------------------------------------------------------------
# symmetry suites

def _rep(name, dev, tol, **extra):
    return {"check": name, "max_deviation": float(dev), "tolerance": tol, "pass": bool(dev <= tol), **extra}


def check_matrix_symmetries(state: ResumState, n, xs, tol=1e-9):
    """Transpose/parity/conjugation relations of ``MM^[n]`` plus its
    structure at ``x = 0``.  Deviations relative to ``max(1, |MM|)``.
    """
    d = state.d
    A, B = slice(0, d), d
    dev = {"alpha_alpha": 0.0, "beta_beta": 0.0, "alpha_beta": 0.0}
    mag = 0.0
    for x in xs:
        P = matrix_jet(state, n, x)[0]
        Q = matrix_jet(state, n, -x)[0]
        m = max(float(np.abs(P).max()), 1.0)
        mag = max(mag, float(np.abs(P).max()))
        dev["alpha_alpha"] = max(dev["alpha_alpha"],
                                 np.abs(P[:, A, A] - np.swapaxes(Q[:, A, A], 1, 2)).max() / m,
                                 np.abs(P[:, A, A] - np.conj(np.swapaxes(P[:, A, A], 1, 2))).max() / m)
        dev["beta_beta"] = max(dev["beta_beta"], np.abs(P[:, B, B] - Q[:, B, B]).max() / m,
                               np.abs(P[:, B, B] - np.conj(P[:, B, B])).max() / m)
        dev["alpha_beta"] = max(dev["alpha_beta"], np.abs(P[:, A, B] + Q[:, B, A]).max() / m,
                                np.abs(P[:, A, B] + np.conj(P[:, B, A])).max() / m)
    out = [_rep(f"resummed_transpose_{k}", v, tol, n=n, magnitude=mag) for k, v in dev.items()]
    v0, d10, _ = matrix_jet(state, n, 0.0)
    m0 = max(float(np.abs(v0).max()), 1.0)
    out.append(_rep("resummed_alpha_alpha_at_zero", np.abs(v0[:, A, A]).max() / m0, tol, n=n))
    out.append(_rep("resummed_dx_alpha_alpha_at_zero", np.abs(d10[:, A, A]).max() / m0, tol, n=n))
    out.append(_rep("resummed_beta_alpha_at_zero", np.abs(v0[:, B, A]).max() / m0, tol, n=n))
    out.append(_rep("resummed_dx_beta_beta_at_zero", abs(d10[:, B, B]).max() / m0, tol, n=n))
    return out


def block_order_ratios(state: ResumState, n, x0, decade=10.0, points=6):
    """``|MM_aa(x)|/x^2`` and ``|MM_ba(x)|/|x|`` over ``[x0, decade*x0]``."""
    d = state.d
    xs = np.geomspace(x0, decade * x0, points)
    raa, rba = [], []
    for x in xs:
        v = matrix_jet(state, n, x)[0].sum(axis=0) if state.symbolic else matrix_jet(state, n, x)[0][0]
        raa.append(float(np.abs(v[:d, :d]).max()) / x**2)
        rba.append(float(np.abs(v[d, :d]).max()) / x)
    return {"x": xs.tolist(), "alpha_alpha_over_x2": raa, "beta_alpha_over_x": rba}


def determinant_monitor(state: ResumState, n, xs):
    """Direct ``det(x^2 1 - MM^[n](x))`` against the leading-order formula
    ``x^{2d}(x^2 - (MM_bb(0) - |d_x MM_ab(0)|^2))``; relative deviations."""
    if state.symbolic:
        raise ValueError("numeric state required")
    d, D = state.d, state.D
    v0, d10, _ = matrix_jet(state, n, 0.0)
    Mbb = v0[0, d, d]
    b = d10[0, :d, d]
    c = Mbb - float(np.sum(np.abs(b) ** 2))
    rows = []
    for x in xs:
        v = matrix_jet(state, n, x)[0][0]
        direct = np.linalg.det(x * x * np.eye(D) - v)
        formula = x ** (2 * d) * (x * x - c)
        rows.append({"x": float(x), "direct": [direct.real, direct.imag],
                     "formula": [complex(formula).real, complex(formula).imag],
                     "relative": float(abs(direct - formula) / abs(formula))})
    return rows


def property_one_constant(state: ResumState, n, xs):
    """``max ||G^[n](x)|| |x|^{2(d+1)}`` over sampled ``x``; ``inf`` on failure."""
    D = state.D
    best = 0.0
    for x in xs:
        try:
            G = propagator(state, n, x)
        except PropertyOneViolation:
            return math.inf
        best = max(best, float(np.linalg.norm(G, 2)) * abs(x) ** (2 * D))
    return best


def is_in_class(Bfun, xs, d, tol=1e-10):
    """Max relative violation of the class relations at ``+-x`` pairs."""
    worst = 0.0
    for x in xs:
        P, Q = Bfun(x), Bfun(-x)
        m = max(float(np.abs(P).max()), float(np.abs(Q).max()), 1e-300)
        dev = max(np.abs(P[:d, :d] - Q[:d, :d].T).max(), abs(P[d, d] - Q[d, d]),
                  np.abs(Q[d, :d] + P[:d, d]).max())
        worst = max(worst, float(dev) / m)
    return worst


def class_closure_check(Bfun, xs, d, tol=1e-10):
    """Check that ``B^{-1}`` obeys the class relations whenever ``B`` does."""
    skipped = []

    def inv(x):
        return np.linalg.inv(Bfun(x))

    good = []
    for x in xs:
        try:
            inv(x), inv(-x)
            good.append(x)
        except np.linalg.LinAlgError:
            skipped.append(float(x))
    dev_b = is_in_class(Bfun, good, d)
    dev_inv = is_in_class(inv, good, d)
    return {"input_deviation": dev_b, "inverse_deviation": dev_inv, "skipped": skipped,
            "tolerance": tol, "pass": bool(dev_inv <= tol)}


def random_class_member(d, rng, degree=3):
    """Random polynomial matrix function in the class (real coefficients)."""
    D = d + 1
    aa = []
    for k in range(degree + 1):
        C = rng.normal(size=(d, d))
        aa.append(C + C.T if k % 2 == 0 else C - C.T)
    bb = [rng.normal() if k % 2 == 0 else 0.0 for k in range(degree + 1)]
    ab = [rng.normal(size=d) for _ in range(degree + 1)]
    shift = 2.0 + rng.uniform()

    def B(x):
        out = np.zeros((D, D))
        for k in range(degree + 1):
            out[:d, :d] += aa[k] * x**k
            out[d, d] += bb[k] * x**k
            out[:d, d] += ab[k] * x**k
            out[d, :d] -= ab[k] * (-x) ** k
        out += shift * np.eye(D)
        return out

    return B


def dump_state(state: ResumState, xs, n_values=None):
    """Per-scale, per-order samples of ``MM^[n]`` on an ``x`` grid."""
    n_values = range(0, state.n_max + 1) if n_values is None else n_values
    out = {"K": state.K, "eps": state.eps, "beta0": state.beta0, "symbolic": state.symbolic,
           "regularised": state.regularised, "scales": {}}
    for n in n_values:
        rows = []
        for x in xs:
            v = matrix_jet(state, n, x)[0]
            rows.append({"x": float(x), "orders": [[[[c.real, c.imag] for c in row] for row in M] for M in v]})
        out["scales"][str(n)] = rows
    out["xi_log"] = state.log
    return out
