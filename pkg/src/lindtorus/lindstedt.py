"""Formal Lindstedt series for the range equations.

The unknowns are ``alpha(t) = psi + a(psi)``, ``beta(t) = beta0 + b(psi)``
with ``psi = omega t`` and ``alpha0 = 0``.  Order by order,

    (omega.nu)^2 a^(k)_nu = -[d_alpha f]^(k-1)_nu
    (omega.nu)^2 b^(k)_nu =  [d_beta f]^(k-1)_nu        (nu != 0)

where ``[.]^(k)`` is the eps^k coefficient of the composed function.  The
composition is carried out one Fourier term of ``f`` at a time: for
``c exp(i(nu0.alpha + m beta))`` the phase ``S = nu0.a + m b`` is a power
series in eps and ``exp(iS)`` follows from the recursion
``E_k = (i/k) sum_j j S_j E_{k-j}``.  This reproduces the multinomial
sums over ``p, q`` and compositions of ``k`` without enumerating them.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError
from .fourier import BetaPoly, TrigPoly
from .smalldiv import Frequency

DEFAULT_TERM_BUDGET = 2_000_000


def component_label(h, d):
    return "beta" if h == d else f"alpha_{h + 1}"


def parse_component(label, d):
    if label == "beta":
        return d
    if label.startswith("alpha_"):
        j = int(label.split("_", 1)[1]) - 1
        if 0 <= j < d:
            return j
    raise ValueError(f"unknown component label {label!r}")


@dataclass
class CoeffTable:
    """Order-by-order coefficients of the formal solution.

    ``a[k][j]`` and ``b[k]`` are ``TrigPoly`` objects in ``(psi, beta0)``
    holding the order-``k`` parts of ``a_j`` and ``b``; ``dA[k][j]`` and
    ``dB[k]`` are the brackets ``[d_{alpha_j} f]^(k)`` and ``[d_beta f]^(k)``
    (all modes, zero mode included).  Index 0 of ``a``/``b`` is empty.
    """

    f: TrigPoly
    omega: tuple
    K: int
    a: list
    b: list
    dA: list
    dB: list
    scales: list = field(default_factory=list)

    @property
    def d(self):
        return self.f.d

    # access ----------------------------------------------------------------
    def _series(self, k, h):
        if not 1 <= k <= self.K:
            raise IndexError(f"order {k} outside 1..{self.K}")
        return self.b[k] if h == self.d else self.a[k][h]

    def entry(self, k, nu, h) -> BetaPoly:
        """``a^(k)_{nu,h}`` (``h < d``) or ``b^(k)_nu`` (``h == d``)."""
        return self._series(k, h).project_mode(nu)

    def modes(self, k):
        out = set()
        for h in range(self.d + 1):
            out.update(self._series(k, h).alpha_modes())
        return sorted(out)

    def entries(self):
        """Iterate ``(k, nu, h, BetaPoly)`` in canonical order."""
        for k in range(1, self.K + 1):
            for h in range(self.d + 1):
                for nu, p in sorted(self._series(k, h).mode_map().items()):
                    yield k, nu, h, p

    def bracket(self, k, h) -> TrigPoly:
        if not 0 <= k <= self.K:
            raise IndexError(f"bracket order {k} outside 0..{self.K}")
        return self.dB[k] if h == self.d else self.dA[k][h]

    def F(self, k):
        """Zero mode ``-[d_alpha f]^(k)_0`` as ``d`` BetaPolys."""
        zero = (0,) * self.d
        return [-self.bracket(k, j).project_mode(zero) for j in range(self.d)]

    def G(self, k) -> BetaPoly:
        """``G^(k)(beta0) = [d_beta f]^(k)_0``."""
        return self.bracket(k, self.d).project_mode((0,) * self.d)

    # evaluation ------------------------------------------------------------
    def truncate(self, K):
        if K > self.K:
            raise BudgetError(f"table holds orders up to {self.K}, asked for {K}")
        return CoeffTable(self.f, self.omega, K, self.a[:K + 1], self.b[:K + 1],
                          self.dA[:K + 1], self.dB[:K + 1], self.scales[:K + 1])

    def G_total(self, eps, K=None):
        """``sum_{k<=K} eps^k G^(k)`` as a BetaPoly."""
        K = self.K if K is None else K
        out = BetaPoly.zero()
        for k in range(K + 1):
            out = out + self.G(k).scale(eps ** k)
        return out

    # serialization -----------------------------------------------------------
    def records(self):
        rows = []
        for k, nu, h, p in self.entries():
            for m, c in p:
                rows.append({"k": k, "nu": list(nu), "h": component_label(h, self.d),
                             "m": m, "re": c.real, "im": c.imag})
        return rows

    def zero_mode_records(self):
        rows = []
        for k in range(self.K + 1):
            for j, p in enumerate(self.F(k)):
                for m, c in p:
                    rows.append({"k": k, "h": component_label(j, self.d), "m": m,
                                 "re": c.real, "im": c.imag})
            for m, c in self.G(k):
                rows.append({"k": k, "h": "beta", "m": m, "re": c.real, "im": c.imag})
        return rows

    def to_dict(self):
        return {
            "K": self.K,
            "d": self.d,
            "omega": list(self.omega),
            "f": self.f.to_records(),
            "entries": self.records(),
            "zero_modes": self.zero_mode_records(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), default=_json_float)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "nu", "h", "m", "re", "im"])
        for r in self.records():
            w.writerow([r["k"], " ".join(str(v) for v in r["nu"]), r["h"], r["m"],
                        repr(r["re"]), repr(r["im"])])
        return buf.getvalue()

    @staticmethod
    def entries_from_dict(data):
        """Rebuild ``{(k, nu, h): BetaPoly}`` from an exported dictionary."""
        d = int(data["d"])
        acc = {}
        for r in data["entries"]:
            key = (int(r["k"]), tuple(int(v) for v in r["nu"]), parse_component(r["h"], d))
            acc.setdefault(key, {})[int(r["m"])] = complex(r["re"], r["im"])
        return {key: BetaPoly(v) for key, v in acc.items()}


def _json_float(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x))


def _shift_by_mode(p: TrigPoly, nu0, m0):
    return TrigPoly(p.d, {(tuple(a + b for a, b in zip(nu, nu0)), m + m0): c for (nu, m), c in p})


def compute_series(f: TrigPoly, freq: Frequency, K: int, term_budget: int = DEFAULT_TERM_BUDGET) -> CoeffTable:
    """Solve the range equations to order ``K``; brackets are kept through ``K``.

    Parameters
    ----------
    f : TrigPoly
        Real perturbation on ``T^d x T``.
    freq : Frequency
        Rotation vector; must have ``freq.d == f.d``.
    K : int
        Highest order of ``a, b``.  Brackets (and hence ``F, G``) are
        computed for ``k = 0..K``.
    term_budget : int
        Cap on the number of stored Fourier terms per order.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if freq.d != f.d:
        raise ValueError(f"omega has dimension {freq.d} but f lives on T^{f.d} x T")
    d = f.d
    omega = np.array(freq.omega)
    terms = [((nu, m), c) for (nu, m), c in f]
    zero = TrigPoly.zero(d)

    a = [[zero] * d]
    b = [zero]
    dA, dB, scales = [], [], []
    # per f-term: phase orders S[1..] and exponential orders E[0..]
    S = [[None] for _ in terms]
    E = [[TrigPoly(d, {((0,) * d, 0): 1.0})] for _ in terms]

    for k in range(K + 1):
        if k >= 1:
            for t, ((nu0, m0), _) in enumerate(terms):
                s = b[k].scale(m0)
                for j in range(d):
                    if nu0[j]:
                        s = s + a[k][j].scale(nu0[j])
                S[t].append(s)
                acc = TrigPoly.zero(d)
                for j in range(1, k + 1):
                    if S[t][j]:
                        acc = acc + (S[t][j] * E[t][k - j]).scale(j)
                E[t].append(acc.scale(1j / k))
        # brackets at order k
        accA = [dict() for _ in range(d)]
        accB = {}
        big = 0.0
        for t, ((nu0, m0), c) in enumerate(terms):
            mono = _shift_by_mode(E[t][k], nu0, m0)
            weight = max(1, abs(m0), *(abs(x) for x in nu0))
            for key, v in mono:
                cv = c * v
                big = max(big, abs(cv) * weight)
                for j in range(d):
                    if nu0[j]:
                        accA[j][key] = accA[j].get(key, 0.0) + 1j * nu0[j] * cv
                if m0:
                    accB[key] = accB.get(key, 0.0) + 1j * m0 * cv
        dA.append([TrigPoly(d, accA[j]) for j in range(d)])
        dB.append(TrigPoly(d, accB))
        scales.append(big)
        n_terms = sum(len(p.coeffs) for p in dA[-1]) + len(dB[-1].coeffs)
        if n_terms > term_budget:
            raise BudgetError(f"order {k} needs {n_terms} Fourier terms (budget {term_budget})")
        if k == K:
            break
        # range equations -> order k+1
        ak, bk = [], None
        for j in range(d):
            out = {}
            for (nu, m), c in dA[k][j]:
                if any(nu):
                    out[(nu, m)] = -c / float(omega @ nu) ** 2
            ak.append(TrigPoly(d, out))
        out = {}
        for (nu, m), c in dB[k]:
            if any(nu):
                out[(nu, m)] = c / float(omega @ nu) ** 2
        bk = TrigPoly(d, out)
        a.append(ak)
        b.append(bk)

    return CoeffTable(f=f, omega=tuple(freq.omega), K=K, a=a, b=b, dA=dA, dB=dB, scales=scales)


def zero_mode_alpha(table: CoeffTable, k: int):
    """``[-d_alpha f]^(k)_0`` as a list of ``d`` BetaPolys."""
    return table.F(k)


def zero_mode_beta(table: CoeffTable, k: int) -> BetaPoly:
    """``G^(k)(beta0) = [d_beta f]^(k)_0``."""
    return table.G(k)


def assemble_fields(table: CoeffTable, eps, beta0, K=None):
    """Collapse the table at fixed ``(eps, beta0)`` into ``{nu: vector}``.

    Returns a dict mapping each nonzero ``nu`` to a complex array of length
    ``d + 1`` (``a_nu`` components then ``b_nu``).
    """
    K = table.K if K is None else K
    d = table.d
    out = {}
    for k in range(1, K + 1):
        w = eps ** k
        for h in range(d + 1):
            series = table.b[k] if h == d else table.a[k][h]
            for (nu, m), c in series:
                vec = out.setdefault(nu, np.zeros(d + 1, dtype=complex))
                vec[h] += w * c * np.exp(1j * m * beta0)
    return out


def brackets_by_sampling(table: CoeffTable, k_max: int, beta0: float, n_psi: int = 16, n_eps: int = 16, rho: float = 0.05):
    """Independent oracle for the brackets at one ``beta0``.

    Evaluates ``d_h f(psi + a(eps), beta0 + b(eps))`` on a psi-grid and on
    a circle of complex ``eps`` radius ``rho``, then extracts Fourier and
    Taylor coefficients by FFT.  Returns ``{(k, nu, h): complex}``.
    """
    d = table.d
    f = table.f
    grids = np.meshgrid(*[2 * np.pi * np.arange(n_psi) / n_psi] * d, indexing="ij")
    psi = np.stack(grids, axis=-1)
    zs = rho * np.exp(2j * np.pi * np.arange(n_eps) / n_eps)
    derivs = [f.deriv_alpha(j) for j in range(d)] + [f.deriv_beta()]
    vals = np.zeros((n_eps, d + 1) + (n_psi,) * d, dtype=complex)
    for iz, z in enumerate(zs):
        shift = np.zeros(psi.shape, dtype=complex)
        db = np.zeros(psi.shape[:-1], dtype=complex)
        for k in range(1, table.K + 1):
            for j in range(d):
                shift[..., j] += z ** k * _eval_complex(table.a[k][j], psi, beta0)
            db += z ** k * _eval_complex(table.b[k], psi, beta0)
        for h, g in enumerate(derivs):
            vals[iz, h] = _eval_at_complex(g, psi + shift, beta0 + db)
    coef = np.fft.fft(vals, axis=0) / n_eps
    coef = np.fft.fftn(coef, axes=tuple(range(2, 2 + d))) / n_psi ** d
    out = {}
    for k in range(k_max + 1):
        for h in range(d + 1):
            it = np.ndindex(*(n_psi,) * d)
            for idx in it:
                nu = tuple(i if i < n_psi // 2 else i - n_psi for i in idx)
                out[(k, nu, h)] = coef[k, h][idx] / rho ** k
    return out


def _eval_complex(p: TrigPoly, psi, beta0):
    out = np.zeros(psi.shape[:-1], dtype=complex)
    for (nu, m), c in p:
        out += c * np.exp(1j * (psi @ np.array(nu, dtype=float) + m * beta0))
    return out


def _eval_at_complex(p: TrigPoly, alpha, beta):
    out = np.zeros(alpha.shape[:-1], dtype=complex)
    for (nu, m), c in p:
        out += c * np.exp(1j * (alpha @ np.array(nu, dtype=float) + m * beta))
    return out
