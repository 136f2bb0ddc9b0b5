"""Sparse polynomials over the phase-space symbols q, p and the hidden symbols Q, P.

A monomial ``q^a p^b Q^c P^d`` is stored under the exponent tuple ``(a, b, c, d)``.
When a polynomial is read as an operator on a wavefunction psi(q, p) the
multiplicative factors sit to the left of the derivative factors, i.e. the
monomial acts as ``q^a p^b (Q^c P^d psi)``.

Coefficients may be ``int``/``Fraction`` (kept exact) or floats.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import Dict, Iterable, Tuple

import numpy as np

Exponents = Tuple[int, int, int, int]

SYMBOLS = ("q", "p", "Q", "P")
MAX_DEGREE = 12


def _is_exact(c) -> bool:
    return isinstance(c, (int, Fraction)) and not isinstance(c, bool)


def _div(c, k):
    if _is_exact(c) and isinstance(k, int):
        return Fraction(c, k) if isinstance(c, int) else c / k
    return c / k


def _simplify(c):
    if isinstance(c, Fraction) and c.denominator == 1:
        return int(c)
    return c


class Poly:
    """Immutable sparse polynomial in (q, p, Q, P)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Dict[Exponents, Number] | None = None):
        clean: Dict[Exponents, Number] = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) == 2:
                exps = exps + (0, 0)
            if len(exps) != 4 or min(exps) < 0:
                raise ValueError(f"bad exponent tuple {exps}")
            if c == 0:
                continue
            if not _is_exact(c) and not math.isfinite(abs(complex(c))):
                raise ValueError("polynomial coefficients must be finite")
            clean[exps] = _simplify(clean.get(exps, 0) + c)
            if clean[exps] == 0:
                del clean[exps]
        self._terms = clean

    # construction
    @classmethod
    def symbols(cls) -> Tuple["Poly", "Poly", "Poly", "Poly"]:
        return tuple(cls({tuple(int(i == k) for i in range(4)): 1}) for k in range(4))

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(0, 0, 0, 0): c})

    @classmethod
    def from_coefficients(cls, coeffs, variable: str) -> "Poly":
        """Univariate polynomial ``sum coeffs[k] * variable**k``."""
        idx = SYMBOLS.index(variable)
        terms = {}
        for k, c in enumerate(coeffs):
            exps = [0, 0, 0, 0]
            exps[idx] = k
            terms[tuple(exps)] = c
        return cls(terms)

    # inspection
    @property
    def terms(self) -> Dict[Exponents, Number]:
        return dict(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items()))

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_classical(self) -> bool:
        """True when no hidden symbol Q or P appears."""
        return all(e[2] == 0 and e[3] == 0 for e in self._terms)

    @property
    def is_hidden_only(self) -> bool:
        return all(e[0] == 0 and e[1] == 0 for e in self._terms)

    @property
    def is_exact(self) -> bool:
        return all(_is_exact(c) for c in self._terms.values())

    def uses(self, symbol: str) -> bool:
        idx = SYMBOLS.index(symbol)
        return any(e[idx] for e in self._terms)

    def coefficient(self, exps: Exponents):
        if len(exps) == 2:
            exps = tuple(exps) + (0, 0)
        return self._terms.get(tuple(exps), 0)

    # arithmetic
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        if isinstance(other, Number):
            return Poly.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for e, c in other._terms.items():
            terms[e] = terms.get(e, 0) + c
        return Poly(terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly({e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: Dict[Exponents, Number] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                # Q^c must pass p^b' and P^d must pass q^a' to stay normal ordered
                if (e1[2] and e2[1]) or (e1[3] and e2[0]):
                    raise ValueError(
                        "product needs reordering of non-commuting factors; "
                        "apply the operators in sequence instead")
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return Poly(terms)

    def __rmul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self

    def __truediv__(self, k):
        if not isinstance(k, Number):
            return NotImplemented
        return Poly({e: _div(c, k) for e, c in self._terms.items()})

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def isclose(self, other, atol: float = 1e-12) -> bool:
        """Coefficient-wise comparison; exact when both sides are exact."""
        other = self._coerce(other)
        diff = self - other
        if self.is_exact and other.is_exact:
            return diff.is_zero
        return all(abs(c) <= atol for c in diff._terms.values())

    # calculus
    def diff(self, symbol: str) -> "Poly":
        idx = SYMBOLS.index(symbol)
        terms = {}
        for e, c in self._terms.items():
            if e[idx]:
                new = list(e)
                new[idx] -= 1
                terms[tuple(new)] = c * e[idx]
        return Poly(terms)

    def integrate(self, symbol: str) -> "Poly":
        """Antiderivative with zero integration constant."""
        idx = SYMBOLS.index(symbol)
        terms = {}
        for e, c in self._terms.items():
            new = list(e)
            new[idx] += 1
            terms[tuple(new)] = _div(c, new[idx])
        return Poly(terms)

    # evaluation
    def __call__(self, q, p=0.0):
        """Evaluate a classical polynomial at (q, p); broadcasts over arrays."""
        if not self.is_classical:
            raise ValueError("cannot evaluate a polynomial containing Q or P pointwise")
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.zeros(np.broadcast(q, p).shape)
        for (a, b, _, _), c in sorted(self._terms.items()):
            out = out + float(c) * q**a * p**b
        return out if out.ndim else float(out)

    def compile(self):
        """Fast evaluator f(q, p) for a classical polynomial (scalars or arrays)."""
        if not self.is_classical:
            raise ValueError("cannot evaluate a polynomial containing Q or P pointwise")
        terms = [(float(c), a, b) for (a, b, _, _), c in sorted(self._terms.items())]

        def f(qv, pv):
            out = 0.0 * qv + 0.0 * pv
            for c, a, b in terms:
                out = out + c * qv**a * pv**b
            return out
        return f

    def split_hidden(self) -> Iterable[Tuple[Tuple[int, int], "Poly"]]:
        """Group terms by hidden exponents (c, d), yielding the classical prefactor."""
        groups: Dict[Tuple[int, int], Dict[Exponents, Number]] = {}
        for (a, b, c, d), coef in self._terms.items():
            groups.setdefault((c, d), {})[(a, b, 0, 0)] = coef
        for key in sorted(groups):
            yield key, Poly(groups[key])

    def __repr__(self):
        if not self._terms:
            return "0"
        parts = []
        for e, c in sorted(self._terms.items()):
            mono = "*".join(
                s if k == 1 else f"{s}**{k}" for s, k in zip(SYMBOLS, e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


q, p, Q, P = Poly.symbols()
