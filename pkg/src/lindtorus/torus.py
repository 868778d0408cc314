"""Bifurcation equation, torus assembly and verification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .fourier import BetaPoly, TrigPoly
from .lindstedt import CoeffTable, assemble_fields

VANISH_TOL = 1e-10


def vanishes(p: BetaPoly, scale: float, tol: float = VANISH_TOL) -> bool:
    """A BetaPoly vanishes when its largest coefficient is below ``tol * scale``."""
    return p.max_abs() <= tol * max(scale, 1e-300)


@dataclass(frozen=True)
class Regime:
    """``kind`` is one of Condition1, Condition2, Condition3, Undetermined."""

    kind: str
    order: int | None
    K: int
    note: str = ""

    def to_dict(self):
        return {"kind": self.kind, "order": self.order, "K": self.K, "note": self.note}


def classify_condition(table: CoeffTable, K=None, cluster_enum=None, K_tree=0,
                       beta0_samples=None, tol=VANISH_TOL) -> Regime:
    """Scan the zero modes, then the mixed self-energy slopes.

    ``cluster_enum`` (a ``trees.ClusterEnumerator``) enables the slope scan
    for orders ``<= K_tree``; without it an all-vanishing table is reported
    as consistent with Condition1 up to ``K``.
    """
    K = table.K if K is None else K
    for k in range(0, K + 1):
        g = table.G(k)
        if not vanishes(g, table.scales[k] if k < len(table.scales) else 1.0, tol):
            return Regime("Condition2", k, K)
    if cluster_enum is not None and K_tree >= 1:
        d = table.d
        samples = np.linspace(0, 2 * np.pi, 16, endpoint=False) if beta0_samples is None else beta0_samples
        nmax = cluster_enum.scales.n_max
        for k in range(1, K_tree + 1):
            worst = 0.0
            for b0 in samples:
                J = cluster_enum.cumulative(k, np.array(0.0), nmax, b0)
                worst = max(worst, float(np.abs(J.d1[:d, d]).max()))
            if worst > tol:
                return Regime("Condition3", k, K)
        return Regime("Undetermined", None, K,
                      f"zero modes through order {K} and slopes through order {K_tree} vanish; "
                      "consistent with Condition1")
    return Regime("Undetermined", None, K, f"zero modes vanish through order {K}; consistent with Condition1")


# --------------------------------------------------------------------------
# roots and branches

@dataclass
class Root:
    beta0: float
    odd_order: int
    slope_sign: int  # sign of the leading nonvanishing derivative
    residual: float

    def to_dict(self):
        return {"beta0": self.beta0, "odd_order": self.odd_order, "sign": self.slope_sign,
                "residual": self.residual}


@dataclass
class BifurcationResult:
    k0: int | None
    roots: list
    branches: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    note: str = ""

    def to_dict(self):
        return {"k0": self.k0, "roots": [r.to_dict() for r in self.roots], "branches": self.branches,
                "degenerate": self.degenerate, "note": self.note}

    def selected(self, eps):
        """Branch point selected for ``eps`` (``eps * dG <= 0``), or ``None``."""
        for br in self.branches:
            if br["eps"] == eps and br["selected"] and br["converged"]:
                return br
        return None


def _wrap(b):
    return float(np.mod(b + np.pi, 2 * np.pi) - np.pi)


def find_roots(g: BetaPoly, grid=2048, xtol=1e-12, tol=VANISH_TOL):
    """Sign-change roots of a real periodic BetaPoly on ``[-pi, pi)``."""
    scale = max(g.max_abs(), 1e-300)
    # offset grid: roots at simple multiples of pi never sit on a node
    xs = -np.pi + 2 * np.pi * (np.arange(grid + 1) + 0.381966) / grid
    vals = np.real(g.eval(xs))
    roots, degenerate = [], []
    fun = lambda b: float(np.real(g.eval(b)))
    dg = g.deriv(1)
    for i in range(grid):
        a, b = xs[i], xs[i + 1]
        va, vb = vals[i], vals[i + 1]
        if va == 0.0 and i > 0:
            continue  # counted as right endpoint of the previous cell
        if va == 0.0:
            r = a
        elif va * vb < 0:
            r = brentq(fun, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
        elif vb == 0.0:
            r = b
        else:
            continue
        for _ in range(3):  # Newton polish with the exact derivative
            d1 = float(np.real(dg.eval(r)))
            if d1 == 0:
                break
            step = fun(r) / d1
            if abs(step) > 1e-10:
                break
            r -= step
        q, sgn = _odd_order(g, r, scale, tol)
        if q is None or q % 2 == 0:
            degenerate.append({"beta0": _wrap(r), "order": q})
            continue
        roots.append(Root(_wrap(r), q, sgn, abs(fun(r))))
    # merge duplicates from the periodic seam
    uniq = []
    for rt in sorted(roots, key=lambda r: r.beta0):
        if not uniq or abs(_wrap(rt.beta0 - uniq[-1].beta0)) > 1e-9:
            uniq.append(rt)
    if len(uniq) > 1 and abs(_wrap(uniq[0].beta0 - uniq[-1].beta0)) <= 1e-9:
        uniq.pop()
    return uniq, degenerate


def _odd_order(g, r, scale, tol, q_max=12):
    for q in range(1, q_max + 1):
        v = float(np.real(g.deriv(q).eval(r)))
        if abs(v) > 1e3 * tol * scale:
            return q, int(np.sign(v))
    return None, 0


def newton_branch(table: CoeffTable, k0, K, beta_start, eps, tol=1e-12, max_iter=60):
    """Solve ``sum_{k=k0}^{K} eps^(k-k0) G^(k)(beta) = 0`` from ``beta_start``."""
    g = BetaPoly.zero()
    for k in range(k0, K + 1):
        g = g + table.G(k).scale(eps ** (k - k0))
    dg = g.deriv(1)
    gf = lambda b: float(np.real(g.eval(b)))
    b = beta_start
    val = gf(b)
    for it in range(max_iter):
        d1 = float(np.real(dg.eval(b)))
        if d1 == 0.0:
            break
        step = val / d1
        lam = 1.0
        while lam > 1e-6:
            nb = b - lam * step
            nv = gf(nb)
            if abs(nv) < abs(val) or abs(nv) <= tol:
                break
            lam *= 0.5
        b, val = nb, nv
        if abs(val) <= tol * 1e-2 or abs(lam * step) < 1e-15:
            break
    full = abs(gf(b)) * abs(eps) ** k0
    slope = float(np.real(dg.eval(b))) * abs(eps) ** k0 * (np.sign(eps) ** k0 if eps else 1.0)
    return {"eps": eps, "beta0": _wrap(b), "iterations": it + 1, "G_residual": full,
            "G_residual_scaled": abs(gf(b)), "converged": bool(full <= tol), "eps_dG": eps * slope}


def solve_bifurcation(table: CoeffTable, K=None, eps_list=(), regime: Regime | None = None,
                      grid=2048, tol=1e-12) -> BifurcationResult:
    """Roots of ``G^(k0)`` and their Newton branches in ``eps``.

    Branches are continued from the root toward larger ``|eps|`` for each
    sign; a branch point is ``selected`` when ``eps dG/dbeta0 <= 0``.
    """
    K = table.K if K is None else K
    regime = regime or classify_condition(table, K)
    if regime.kind != "Condition2":
        return BifurcationResult(None, [], note=f"regime {regime.kind}: no bifurcation equation to solve")
    k0 = regime.order
    roots, degenerate = find_roots(table.G(k0), grid=grid)
    res = BifurcationResult(k0, roots, degenerate=degenerate)
    if not roots:
        res.note = "no sign change although the leading zero mode is not identically zero"
        return res
    eps_list = [float(e) for e in eps_list]
    for ri, rt in enumerate(roots):
        for sgn in (1.0, -1.0):
            chain = sorted((e for e in eps_list if np.sign(e) == sgn and e != 0), key=abs)
            b = rt.beta0
            for e in chain:
                br = newton_branch(table, k0, K, b, e, tol=tol)
                br["root_index"] = ri
                br["selected"] = bool(br["eps_dG"] <= 0.0)
                res.branches.append(br)
                if br["converged"]:
                    b = br["beta0"]
        if 0.0 in eps_list:
            res.branches.append({"eps": 0.0, "beta0": rt.beta0, "iterations": 0,
                                 "G_residual": abs(float(np.real(table.G(k0).eval(rt.beta0)))),
                                 "G_residual_scaled": 0.0, "converged": True, "eps_dG": 0.0,
                                 "root_index": ri, "selected": True})
    return res


# --------------------------------------------------------------------------
# the torus

@dataclass
class TorusSolution:
    """Truncated plain series at ``(eps, beta0)``.

    ``fields[nu]`` is the complex vector ``(a_nu, b_nu)``; ``alpha(psi) =
    psi + a(psi)`` and ``beta(psi) = beta0 + b(psi)``.
    """

    eps: float
    beta0: float
    K: int
    omega: tuple
    fields: dict
    regime: str = ""

    @property
    def d(self):
        return len(self.omega)

    def _arrays(self):
        if not self.fields:
            return np.zeros((0, self.d), int), np.zeros((0, self.d + 1), complex)
        nus = np.array(sorted(self.fields), dtype=int)
        vecs = np.array([self.fields[tuple(n)] for n in nus])
        return nus, vecs

    def evaluate(self, psi, order=0):
        """``(omega.d_psi)^order`` of ``(a, b)`` at ``psi`` (shape ``(..., d)``).

        Returns shape ``(..., d+1)`` complex; imaginary parts are rounding.
        """
        psi = np.asarray(psi, dtype=float)
        nus, vecs = self._arrays()
        if nus.size == 0:
            return np.zeros(psi.shape[:-1] + (self.d + 1,), complex)
        mult = (1j * (nus @ np.array(self.omega))) ** order
        ph = np.exp(1j * psi @ nus.T) * mult
        return ph @ vecs

    def to_dict(self):
        return {"eps": self.eps, "beta0": self.beta0, "K": self.K, "omega": list(self.omega),
                "regime": self.regime,
                "fields": [{"nu": list(nu), "re": v.real.tolist(), "im": v.imag.tolist()}
                           for nu, v in sorted(self.fields.items())]}

    @classmethod
    def from_dict(cls, data):
        fields = {tuple(r["nu"]): np.array(r["re"]) + 1j * np.array(r["im"]) for r in data["fields"]}
        return cls(data["eps"], data["beta0"], data["K"], tuple(data["omega"]), fields, data.get("regime", ""))


def assemble(table: CoeffTable, eps, beta0, K=None, regime="") -> TorusSolution:
    K = table.K if K is None else K
    fields = assemble_fields(table, eps, beta0, K) if eps != 0 else {}
    return TorusSolution(float(eps), float(beta0), K, tuple(table.omega), fields, regime)


class _FastGrad:
    """Vectorised evaluation of ``d_alpha f`` and ``d_beta f``."""

    def __init__(self, f: TrigPoly):
        items = list(f)
        self.d = f.d
        self.nu = np.array([k[0] for k, _ in items], dtype=float).reshape(len(items), f.d)
        self.m = np.array([k[1] for k, _ in items], dtype=float)
        self.c = np.array([c for _, c in items], dtype=complex)

    def __call__(self, alpha, beta):
        ph = np.exp(1j * (alpha @ self.nu.T + np.multiply.outer(beta, self.m))) * self.c
        ga = np.real((1j * ph) @ self.nu)
        gb = np.real((1j * ph) @ self.m)
        return ga, gb


def verify_residual(sol: TorusSolution, f: TrigPoly, grid=32, sign_flip=False):
    """Residuals of the equations of motion on a ``grid^d`` torus grid.

    ``r_range`` is the max of the non-constant part of the pointwise
    residual, ``r_bif`` the modulus of its grid average (beta component)
    and ``r_bif_alpha`` the same for the alpha components.
    """
    d = sol.d
    axes = [np.arange(grid) * 2 * np.pi / grid] * d
    psi = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    ab = np.real(sol.evaluate(psi))
    acc = np.real(sol.evaluate(psi, order=2))
    grad = _FastGrad(f)
    ga, gb = grad(psi + ab[:, :d], sol.beta0 + ab[:, d])
    sb = -1.0 if sign_flip else 1.0
    res = np.empty_like(ab)
    res[:, :d] = acc[:, :d] - sol.eps * ga
    res[:, d] = acc[:, d] + sb * sol.eps * gb
    mean = res.mean(axis=0)
    r_range = float(np.abs(res - mean).max())
    return {"r_range": r_range, "r_bif": float(abs(mean[d])), "r_bif_alpha": float(np.abs(mean[:d]).max()),
            "r_total": float(np.abs(res).max()), "grid": grid}


def verify_ode(sol: TorusSolution, f: TrigPoly, T=10.0, h=1e-3, psi0=None, blowup=1e3):
    """Integrate the equations of motion with classical RK4 and compare
    with the quasi-periodic prediction ``(omega t + a, beta0 + b)``."""
    d = sol.d
    omega = np.array(sol.omega)
    psi0 = np.zeros(d) if psi0 is None else np.asarray(psi0, float)
    grad = _FastGrad(f)
    eps = sol.eps
    pos0 = np.real(sol.evaluate(psi0[None, :]))[0]
    vel0 = np.real(sol.evaluate(psi0[None, :], order=1))[0]
    q = np.concatenate([psi0 + pos0[:d], [sol.beta0 + pos0[d]]])
    v = np.concatenate([omega + vel0[:d], [vel0[d]]])

    def accel(q):
        ga, gb = grad(q[None, :d], np.array([q[d]]))
        return np.concatenate([eps * ga[0], [-eps * gb[0]]])

    steps = int(round(T / h))
    dev = 0.0
    for i in range(1, steps + 1):
        k1q, k1v = v, accel(q)
        k2q, k2v = v + 0.5 * h * k1v, accel(q + 0.5 * h * k1q)
        k3q, k3v = v + 0.5 * h * k2v, accel(q + 0.5 * h * k2q)
        k4q, k4v = v + h * k3v, accel(q + h * k3q)
        q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = i * h
        psi = psi0 + omega * t
        pred = np.real(sol.evaluate(psi[None, :]))[0]
        err = np.abs(q - np.concatenate([psi + pred[:d], [sol.beta0 + pred[d]]])).max()
        dev = max(dev, float(err))
        if not np.isfinite(err) or err > blowup:
            return {"deviation": math.inf, "escape_time": t, "T": T, "h": h}
    return {"deviation": dev, "escape_time": None, "T": T, "h": h}
