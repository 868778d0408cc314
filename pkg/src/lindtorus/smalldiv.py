"""Small divisors, multiscale sequences and smooth cutoffs.

The small-divisor table is ``alpha_m = min |omega . nu|`` over integer
vectors with ``0 < |nu|_1 <= 2**m``.  The scale sequences ``m_n, p_n`` and
the cutoff families ``chi_n, psi_n, Psi_n, xi_n`` are built on top of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import BudgetError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_M_MAX = 20
DEFAULT_N_MAX = 8
DEFAULT_BUDGET = 200_000_000


def _tail_count(d_tail, N):
    # crude upper bound on the number of tail vectors scanned
    return (2 * N + 1) ** max(d_tail, 0)


def _min_small_divisor(omega, N, budget):
    """Exact ``min |omega.nu|`` over ``0 < |nu|_1 <= N`` and a minimiser.

    One coordinate (the pivot, largest ``|omega_j|``) is optimised in
    closed form for every value of the remaining coordinates: for fixed
    tail the objective ``|omega_p nu_p + c|`` is convex in ``nu_p`` so the
    nearest admissible integers to ``-c/omega_p`` are the only candidates.
    """
    omega = np.asarray(omega, dtype=float)
    d = omega.size
    if d == 1:
        return abs(float(omega[0])), (1,)
    piv = int(np.argmax(np.abs(omega)))
    wp = omega[piv]
    others = [j for j in range(d) if j != piv]
    wt = omega[others]
    if _tail_count(d - 1, N) > budget:
        raise BudgetError(
            f"small-divisor scan over |nu|_1 <= {N} in d={d} needs about "
            f"{_tail_count(d - 1, N):.3g} evaluations (budget {budget}); "
            "lower M_max or raise the budget")

    best = (math.inf, None)
    last = np.arange(-N, N + 1)

    def scan(prefix, used):
        nonlocal best
        if len(prefix) < d - 2:
            for v in range(-(N - used), N - used + 1):
                scan(prefix + [v], used + abs(v))
            return
        r_last = N - used
        tl = last[np.abs(last) <= r_last]
        c = float(np.dot(wt[:-1], prefix)) + wt[-1] * tl
        r = r_last - np.abs(tl)
        t = -c / wp
        lo = np.clip(np.floor(t), -r, r)
        hi = np.clip(np.ceil(t), -r, r)
        tail_zero = (tl == 0) & (not any(prefix))
        # nu = 0 is excluded: with a zero tail the pivot must be +-1
        lo = np.where(tail_zero, 1.0, lo)
        hi = np.where(tail_zero, -1.0, hi)
        vlo = np.abs(wp * lo + c)
        vhi = np.abs(wp * hi + c)
        use_hi = vhi < vlo
        vals = np.where(use_hi, vhi, vlo)
        i = int(np.argmin(vals))
        if vals[i] < best[0]:
            nu = np.zeros(d, dtype=int)
            nu[others] = list(prefix) + [int(tl[i])]
            nu[piv] = int(hi[i] if use_hi[i] else lo[i])
            best = (float(vals[i]), tuple(int(v) for v in nu))

    scan([], 0)
    value, nu = best
    # canonical sign: first nonzero entry positive
    first = next(v for v in nu if v != 0)
    if first < 0:
        nu = tuple(-v for v in nu)
    return value, nu


@dataclass(frozen=True)
class Frequency:
    """Rotation vector ``omega`` with its small-divisor table up to ``M_max``.

    Construction validates ``omega . nu != 0`` for every ``0 < |nu|_1 <=
    2**M_max`` (exactly, through the table itself).
    """

    omega: tuple
    M_max: int = DEFAULT_M_MAX
    budget: int = DEFAULT_BUDGET
    alpha_table: tuple = field(init=False, repr=False)
    argmin_table: tuple = field(init=False, repr=False)

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        if len(omega) < 1 or not all(math.isfinite(w) for w in omega):
            raise ValueError("omega must be a non-empty vector of finite reals")
        if self.M_max < 0:
            raise ValueError("M_max must be non-negative")
        object.__setattr__(self, "omega", omega)
        alphas, nus = [], []
        for m in range(self.M_max + 1):
            a, nu = _min_small_divisor(omega, 2 ** m, self.budget)
            alphas.append(a)
            nus.append(nu)
        if alphas[-1] <= 0.0:
            raise ValueError(
                f"omega is resonant: omega.nu = 0 for nu = {nus[-1]} "
                f"with |nu|_1 <= 2**{self.M_max}")
        object.__setattr__(self, "alpha_table", tuple(alphas))
        object.__setattr__(self, "argmin_table", tuple(nus))

    @property
    def d(self):
        return len(self.omega)

    @property
    def vector(self):
        return np.array(self.omega)

    def dot(self, nu):
        return float(np.dot(self.omega, nu))

    @classmethod
    def golden2(cls, M_max=DEFAULT_M_MAX, budget=DEFAULT_BUDGET):
        """The two-frequency preset ``(1, (sqrt(5)-1)/2)``."""
        return cls((1.0, GOLDEN), M_max=M_max, budget=budget)


def alpha_m(freq: Frequency, m: int) -> float:
    """``min |omega . nu|`` over integer ``0 < |nu|_1 <= 2**m``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m > freq.M_max:
        raise BudgetError(f"alpha_{m} requested but the table stops at M_max={freq.M_max}")
    return freq.alpha_table[m]


def bryuno_partial(freq: Frequency, M: int) -> float:
    """Partial Bryuno sum ``sum_{m<=M} 2**-m log(1/alpha_m)``."""
    return float(sum(2.0 ** -m * math.log(1.0 / alpha_m(freq, m)) for m in range(M + 1)))


# --------------------------------------------------------------------------
# smooth cutoffs

def _expit_pair(h):
    """Return ``1/(1+e^h)`` and its logistic weight ``c(1-c)``."""
    c = expit(-h)
    return c, c * expit(h)


def chi_jet(x):
    """Value, first and second derivative of the base cutoff ``chi``.

    ``chi(x) = g(1-|x|) / (g(1-|x|) + g(|x|-1/2))`` with ``g(t) = exp(-1/t)``
    for ``t > 0``; written as a logistic of ``h = 1/(1-|x|) - 1/(|x|-1/2)``
    to stay finite near the support ends.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    inner = (ax > 0.5) & (ax < 1.0)
    u = np.where(inner, 1.0 - ax, 0.5)
    v = np.where(inner, ax - 0.5, 0.5)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        h = 1.0 / u - 1.0 / v
        c, w = _expit_pair(h)
        h1 = 1.0 / u**2 + 1.0 / v**2
        h2 = 2.0 / u**3 - 2.0 / v**3
        d1 = -w * h1
        d2 = -(d1 * (1.0 - 2.0 * c) * h1 + w * h2)
    val = np.where(ax <= 0.5, 1.0, np.where(ax >= 1.0, 0.0, c))
    d1 = np.where(inner, d1, 0.0) * np.sign(x)
    d2 = np.where(inner, d2, 0.0)
    d1 = np.nan_to_num(d1)
    d2 = np.nan_to_num(d2)
    return val, d1, d2


def cutoff_chi(x):
    """The base cutoff: 1 on ``|x| <= 1/2``, 0 on ``|x| >= 1``, smooth, even."""
    v = chi_jet(x)[0]
    return float(v) if np.ndim(v) == 0 else v


def _step_down_jet(x, a, b):
    """Smooth non-increasing switch: 1 for ``x <= a``, 0 for ``x >= b``."""
    x = np.asarray(x, dtype=float)
    t = 0.5 + 0.5 * (x - a) / (b - a)
    s = 0.5 / (b - a)
    v, d1, d2 = chi_jet(np.maximum(t, 0.0))
    return v, d1 * s, d2 * s * s


@dataclass(frozen=True)
class ScaleSystem:
    """Scale sequences ``m_n, p_n`` and the cutoff families built on them."""

    freq: Frequency
    n_max: int
    m_seq: tuple
    p_seq: tuple
    halving_failures: tuple = ()

    @property
    def alpha_table(self):
        return self.freq.alpha_table

    def alpha_scale(self, n):
        """``alpha_{m_n}``; ``+inf`` for ``n = -1``."""
        if n == -1:
            return math.inf
        if n < -1 or n >= len(self.m_seq):
            raise BudgetError(f"scale {n} outside the built range (n_max={self.n_max})")
        return self.freq.alpha_table[self.m_seq[n]]

    def _check(self, n, lo=-1, hi=None):
        hi = self.n_max if hi is None else hi
        if n < lo or n > hi:
            raise BudgetError(f"scale index {n} outside [{lo}, {hi}] (n_max={self.n_max})")

    # chi_n, psi_n, Psi_n ------------------------------------------------
    def chi_jet(self, n, x):
        self._check(n)
        x = np.asarray(x, dtype=float)
        if n == -1:
            one = np.ones_like(x)
            return one, 0.0 * x, 0.0 * x
        s = 8.0 / self.alpha_scale(n)
        v, d1, d2 = chi_jet(s * x)
        return v, s * d1, s * s * d2

    def chi(self, n, x):
        return self.chi_jet(n, x)[0]

    def psi(self, n, x):
        return 1.0 - self.chi(n, x)

    def Psi_jet(self, n, x):
        """Jet of ``Psi_n = chi_{n-1} (1 - chi_n)``."""
        self._check(n, lo=0)
        a0, a1, a2 = self.chi_jet(n - 1, x)
        c0, c1, c2 = self.chi_jet(n, x)
        b0, b1, b2 = 1.0 - c0, -c1, -c2
        return a0 * b0, a1 * b0 + a0 * b1, a2 * b0 + 2.0 * a1 * b1 + a0 * b2

    def Psi(self, n, x):
        return self.Psi_jet(n, x)[0]

    def cumulative_jet(self, n, x):
        """Jet of ``sum_{p=0}^{n} Psi_p = 1 - chi_n`` (zero for ``n = -1``)."""
        self._check(n)
        c0, c1, c2 = self.chi_jet(n, x)
        return 1.0 - c0, -c1, -c2

    def admissible_scales(self, y):
        """Scales ``n`` in ``[0, n_max]`` with ``Psi_n(y) != 0``."""
        return [n for n in range(self.n_max + 1) if self.Psi(n, y) != 0.0]

    def minimum_scale(self, y):
        s = self.admissible_scales(y)
        return s[0] if s else None

    # xi_n -----------------------------------------------------------------
    def xi_bounds(self, n):
        a = self.alpha_scale(n + 1) ** 2 / 2.0**12
        return a, 2.0 * a

    def xi_jet(self, n, x):
        self._check(n)
        x = np.asarray(x, dtype=float)
        if n == -1:
            return np.ones_like(x), 0.0 * x, 0.0 * x
        a, b = self.xi_bounds(n)
        return _step_down_jet(x, a, b)

    def xi(self, n, x):
        v = self.xi_jet(n, x)[0]
        return float(v) if np.ndim(v) == 0 else v


def build_scales(freq: Frequency, n_max: int = DEFAULT_N_MAX) -> ScaleSystem:
    """Build ``m_n`` (``n <= n_max + 1``) and ``p_n`` (``n <= n_max``).

    ``p_n`` is the largest ``q >= 0`` with ``alpha_{m_n} < 2 alpha_{m_n + q}``.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    al = freq.alpha_table
    M = freq.M_max
    m_seq, p_seq, halving = [0], [], []
    for n in range(n_max + 1):
        m = m_seq[-1]
        q = 0
        while True:
            if m + q + 1 > M:
                raise BudgetError(
                    f"scale sequence needs alpha_{m + q + 1} but M_max={M}; "
                    f"raise M_max to at least {m + q + 1}")
            if al[m] < 2.0 * al[m + q + 1]:
                q += 1
            else:
                break
        p_seq.append(q)
        m_seq.append(m + q + 1)
        if not al[m_seq[-1]] <= al[m] / 2.0:
            halving.append(n)
    return ScaleSystem(freq=freq, n_max=n_max, m_seq=tuple(m_seq),
                       p_seq=tuple(p_seq), halving_failures=tuple(halving))


def cutoff_Psi(n: int, x, scales: ScaleSystem):
    v = scales.Psi(n, x)
    return float(v) if np.ndim(v) == 0 else v


def cutoff_xi(n: int, x, scales: ScaleSystem):
    return scales.xi(n, x)
