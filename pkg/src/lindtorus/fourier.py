"""Finite Fourier series on T^d x T and on T, plus second-order jets.

``TrigPoly`` stores ``sum c[nu, m] exp(i(nu.alpha + m beta))`` as a sparse
map keyed by ``(nu, m)`` with ``nu`` an integer tuple.  ``BetaPoly`` is the
one-angle analogue ``sum c[m] exp(i m beta)``.  All iteration is in sorted
key order so that floating-point sums are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

_ZERO_TOL = 0.0


def _clean(coeffs, tol=_ZERO_TOL):
    return {k: complex(v) for k, v in sorted(coeffs.items()) if abs(v) > tol}


# --------------------------------------------------------------------------
# BetaPoly

@dataclass(frozen=True)
class BetaPoly:
    """Trigonometric polynomial in one angle: ``{m: c_m}``."""

    coeffs: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _clean({int(k): v for k, v in dict(self.coeffs).items()}))

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls):
        return cls({})

    @classmethod
    def const(cls, c):
        return cls({0: c})

    @classmethod
    def cos(cls, m=1, amp=1.0):
        if m == 0:
            return cls({0: amp})
        return cls({m: amp / 2, -m: amp / 2})

    @classmethod
    def sin(cls, m=1, amp=1.0):
        if m == 0:
            return cls({})
        return cls({m: amp / 2j, -m: -amp / 2j})

    # queries ------------------------------------------------------------
    def __iter__(self):
        return iter(self.coeffs.items())

    def __getitem__(self, m):
        return self.coeffs.get(m, 0.0)

    def __bool__(self):
        return bool(self.coeffs)

    @property
    def harmonics(self):
        return tuple(self.coeffs)

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def is_real(self, tol=1e-12):
        scale = max(self.max_abs(), 1.0)
        return all(abs(c - np.conj(self[-m])) <= tol * scale for m, c in self)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, BetaPoly):
            other = BetaPoly.const(other)
        out = dict(self.coeffs)
        for m, c in other:
            out[m] = out.get(m, 0.0) + c
        return BetaPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return BetaPoly({m: -c for m, c in self})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return BetaPoly({m: s * c for m, c in self})

    def __mul__(self, other):
        if not isinstance(other, BetaPoly):
            return self.scale(other)
        out = {}
        for m1, c1 in self:
            for m2, c2 in other:
                out[m1 + m2] = out.get(m1 + m2, 0.0) + c1 * c2
        return BetaPoly(out)

    __rmul__ = __mul__

    def deriv(self, q=1):
        if q < 0:
            raise ValueError("derivative order must be non-negative")
        return BetaPoly({m: (1j * m) ** q * c for m, c in self})

    def conj_reflect(self):
        """``p(beta)^*`` for real ``beta``: ``c_m -> conj(c_{-m})``."""
        return BetaPoly({-m: np.conj(c) for m, c in self})

    def __call__(self, beta):
        return self.eval(beta)

    def eval(self, beta):
        beta = np.asarray(beta, dtype=float)
        out = np.zeros(beta.shape, dtype=complex)
        for m, c in self:
            out = out + c * np.exp(1j * m * beta)
        return complex(out) if out.ndim == 0 else out

    def to_records(self):
        return [{"m": m, "re": c.real, "im": c.imag} for m, c in self]

    @classmethod
    def from_records(cls, recs):
        return cls({int(r["m"]): complex(r["re"], r["im"]) for r in recs})


def bp_eval(p: BetaPoly, beta0):
    return p.eval(beta0)


def bp_deriv(p: BetaPoly, q: int) -> BetaPoly:
    return p.deriv(q)


# --------------------------------------------------------------------------
# TrigPoly

@dataclass(frozen=True)
class TrigPoly:
    """Trigonometric polynomial on ``T^d x T``: ``{(nu, m): c}``."""

    d: int
    coeffs: Mapping[tuple, complex] = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for (nu, m), c in dict(self.coeffs).items():
            nu = tuple(int(v) for v in nu)
            if len(nu) != self.d:
                raise ValueError(f"mode {nu} does not have {self.d} components")
            key = (nu, int(m))
            norm[key] = norm.get(key, 0.0) + c
        object.__setattr__(self, "coeffs", _clean(norm))

    @classmethod
    def zero(cls, d):
        return cls(d, {})

    @classmethod
    def cos(cls, nu, m=0, amp=1.0):
        """``amp * cos(nu.alpha + m beta)``."""
        nu = tuple(nu)
        neg = tuple(-v for v in nu)
        if not any(nu) and m == 0:
            return cls(len(nu), {(nu, 0): amp})
        return cls(len(nu), {(nu, m): amp / 2, (neg, -m): amp / 2})

    @classmethod
    def sin(cls, nu, m=0, amp=1.0):
        nu = tuple(nu)
        neg = tuple(-v for v in nu)
        if not any(nu) and m == 0:
            return cls(len(nu), {})
        return cls(len(nu), {(nu, m): amp / 2j, (neg, -m): -amp / 2j})

    @classmethod
    def standard_example(cls):
        """``cos(alpha_1 + beta) + cos(alpha_2) + cos(beta)`` on ``T^2 x T``."""
        return cls.cos((1, 0), 1) + cls.cos((0, 1), 0) + cls.cos((0, 0), 1)

    # queries --------------------------------------------------------------
    def __iter__(self):
        return iter(self.coeffs.items())

    def __bool__(self):
        return bool(self.coeffs)

    def __getitem__(self, key):
        nu, m = key
        return self.coeffs.get((tuple(nu), m), 0.0)

    def alpha_modes(self):
        """Sorted tuple of distinct ``nu`` with a nonzero coefficient."""
        return tuple(sorted({nu for nu, _ in self.coeffs}))

    def alpha_degree(self):
        return max((sum(abs(v) for v in nu) for nu in self.alpha_modes()), default=0)

    def beta_degree(self):
        return max((abs(m) for _, m in self.coeffs), default=0)

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def is_real(self, tol=1e-12):
        scale = max(self.max_abs(), 1.0)
        for (nu, m), c in self:
            partner = self[(tuple(-v for v in nu), -m)]
            if abs(c - np.conj(partner)) > tol * scale:
                return False
        return True

    # arithmetic -----------------------------------------------------------
    def _check(self, other):
        if other.d != self.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.coeffs)
        for k, c in other:
            out[k] = out.get(k, 0.0) + c
        return TrigPoly(self.d, out)

    def __neg__(self):
        return TrigPoly(self.d, {k: -c for k, c in self})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return TrigPoly(self.d, {k: s * c for k, c in self})

    def __mul__(self, other):
        if not isinstance(other, TrigPoly):
            return self.scale(other)
        self._check(other)
        out = {}
        for (n1, m1), c1 in self:
            for (n2, m2), c2 in other:
                key = (tuple(a + b for a, b in zip(n1, n2)), m1 + m2)
                out[key] = out.get(key, 0.0) + c1 * c2
        return TrigPoly(self.d, out)

    __rmul__ = __mul__

    def deriv_alpha(self, j):
        """``d/d alpha_j`` with ``j`` a 0-based component index."""
        if not 0 <= j < self.d:
            raise IndexError(f"component {j} outside 0..{self.d - 1}")
        return TrigPoly(self.d, {(nu, m): 1j * nu[j] * c for (nu, m), c in self})

    def deriv_beta(self, q=1):
        return TrigPoly(self.d, {(nu, m): (1j * m) ** q * c for (nu, m), c in self})

    def project_mode(self, nu) -> BetaPoly:
        """``hat f_nu(beta)``: the coefficient of ``exp(i nu.alpha)``."""
        nu = tuple(nu)
        return BetaPoly({m: c for (n, m), c in self if n == nu})

    def mode_map(self):
        """``{nu: hat f_nu}`` over the alpha-support."""
        out = {}
        for (nu, m), c in self:
            out.setdefault(nu, {})[m] = c
        return {nu: BetaPoly(v) for nu, v in out.items()}

    def eval(self, alpha, beta):
        """Evaluate at points; ``alpha`` has trailing axis ``d``."""
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        out = 0.0
        for (nu, m), c in self:
            out = out + c * np.exp(1j * (alpha @ np.array(nu, dtype=float) + m * beta))
        return np.asarray(out, dtype=complex) * np.ones(np.broadcast_shapes(alpha.shape[:-1], beta.shape))

    # serialization -------------------------------------------------------
    def to_records(self):
        return [{"nu": list(nu), "m": m, "re": c.real, "im": c.imag} for (nu, m), c in self]

    @classmethod
    def from_records(cls, recs, d=None, tol=1e-12):
        """Load the JSON record form; non-real input is rejected."""
        recs = list(recs)
        if d is None:
            if not recs:
                raise ValueError("cannot infer d from an empty record list")
            d = len(recs[0]["nu"])
        coeffs = {}
        for r in recs:
            key = (tuple(int(v) for v in r["nu"]), int(r["m"]))
            coeffs[key] = coeffs.get(key, 0.0) + complex(float(r["re"]), float(r.get("im", 0.0)))
        p = cls(d, coeffs)
        if not p.is_real(tol):
            raise ValueError("Fourier records violate the reality condition c(-nu,-m) = conj c(nu,m)")
        return p

    def to_json(self):
        return json.dumps(self.to_records())

    @classmethod
    def from_json(cls, text, d=None):
        return cls.from_records(json.loads(text), d=d)


def tp_mul(a: TrigPoly, b: TrigPoly) -> TrigPoly:
    return a * b


def tp_deriv_alpha(a: TrigPoly, j: int) -> TrigPoly:
    return a.deriv_alpha(j)


def tp_deriv_beta(a: TrigPoly) -> TrigPoly:
    return a.deriv_beta()


def project_mode(f: TrigPoly, nu) -> BetaPoly:
    return f.project_mode(nu)


# --------------------------------------------------------------------------
# Jet2

@dataclass(frozen=True)
class Jet2:
    """Value with first and second derivative in one real parameter.

    Fields may be scalars or numpy arrays of matching shape; arithmetic is
    the exact second-order Leibniz calculus.
    """

    value: object
    d1: object = 0.0
    d2: object = 0.0

    @classmethod
    def variable(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.ones_like(x), np.zeros_like(x))

    @classmethod
    def const(cls, c):
        return cls(c, 0.0 * np.asarray(c), 0.0 * np.asarray(c))

    def _lift(self, other):
        return other if isinstance(other, Jet2) else Jet2.const(other)

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        return Jet2(self.value * o.value,
                    self.d1 * o.value + self.value * o.d1,
                    self.d2 * o.value + 2 * self.d1 * o.d1 + self.value * o.d2)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        return Jet2(1 / v, -self.d1 / v**2, 2 * self.d1**2 / v**3 - self.d2 / v**2)

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("Jet2 supports non-negative integer powers only")
        out = Jet2.const(np.ones_like(np.asarray(self.value)))
        for _ in range(n):
            out = out * self
        return out

    def compose(self, g0, g1, g2):
        """Chain rule for ``g(self)`` given ``g, g', g''`` at ``self.value``."""
        return Jet2(g0, g1 * self.d1, g2 * self.d1**2 + g1 * self.d2)

    def matmul(self, other):
        """Product of matrix-valued jets (last two axes are matrix axes)."""
        o = self._lift(other)
        return Jet2(self.value @ o.value,
                    self.d1 @ o.value + self.value @ o.d1,
                    self.d2 @ o.value + 2 * self.d1 @ o.d1 + self.value @ o.d2)

    def inv(self):
        """Inverse of a matrix-valued jet: ``(A^-1)' = -A^-1 A' A^-1``."""
        a_inv = np.linalg.inv(self.value)
        d1 = -a_inv @ self.d1 @ a_inv
        d2 = -a_inv @ (self.d2 @ a_inv + 2 * self.d1 @ d1)
        return Jet2(a_inv, d1, d2)

    def conj(self):
        return Jet2(np.conj(self.value), np.conj(self.d1), np.conj(self.d2))

    def __getitem__(self, idx):
        return Jet2(np.asarray(self.value)[idx], np.asarray(self.d1)[idx], np.asarray(self.d2)[idx])

    def as_tuple(self):
        return self.value, self.d1, self.d2


def fd_derivatives(fun, x, h=1e-4):
    """Central finite differences (first, second) used as a test oracle."""
    fp, f0, fm = fun(x + h), fun(x), fun(x - h)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


__all__ = [
    "BetaPoly", "TrigPoly", "Jet2", "bp_eval", "bp_deriv", "tp_mul",
    "tp_deriv_alpha", "tp_deriv_beta", "project_mode", "fd_derivatives",
]

