"""Sparse multivariate polynomials keyed by exponent tuples."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class Polynomial:
    nvars: int
    terms: tuple  # sorted ((exponents, coeff), ...), zero coefficients dropped

    def __post_init__(self):
        if isinstance(self.terms, dict):
            items = self.terms.items()
        else:
            items = self.terms
        acc = defaultdict(float)
        for e, c in items:
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars or min(e, default=0) < 0:
                raise ContractError(f"bad exponent {e} for {self.nvars} variables")
            acc[e] += float(c)
        object.__setattr__(self, "terms", tuple(sorted((e, c) for e, c in acc.items() if c != 0.0)))

    # construction ----------------------------------------------------------
    @classmethod
    def constant(cls, c: float, nvars: int = 3) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, i: int, nvars: int = 3) -> "Polynomial":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, exponents, coeff: float = 1.0) -> "Polynomial":
        return cls(len(exponents), {tuple(exponents): coeff})

    @property
    def as_dict(self) -> dict:
        return dict(self.terms)

    # arithmetic ------------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ContractError("variable counts differ")
            return other
        return Polynomial.constant(float(other), self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        return Polynomial(self.nvars, list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, [(e, -c) for e, c in self.terms])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        acc = defaultdict(float)
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                acc[tuple(a + b for a, b in zip(e1, e2))] += c1 * c2
        return Polynomial(self.nvars, acc)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ContractError("negative power")
        out, base = Polynomial.constant(1.0, self.nvars), self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # structure -------------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def homogeneous_part(self, d: int) -> "Polynomial":
        return Polynomial(self.nvars, [(e, c) for e, c in self.terms if sum(e) == d])

    def is_homogeneous(self) -> bool:
        return len({sum(e) for e, _ in self.terms}) <= 1

    def is_even(self, tol: float = 1e-14) -> bool:
        return all(abs(c) <= tol for e, c in self.terms if sum(e) % 2)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for _, c in self.terms), default=0.0)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros(x.shape[:-1])
        E = np.array([e for e, _ in self.terms])
        c = np.array([c for _, c in self.terms])
        mono = np.prod(x[..., None, :] ** E, axis=-1)
        return mono @ c

    def to_json(self) -> list:
        return [{"exponents": list(e), "coeff": c} for e, c in self.terms]

    @classmethod
    def from_json(cls, data, nvars: int = 3) -> "Polynomial":
        return cls(nvars, [(tuple(t["exponents"]), t["coeff"]) for t in data])


def squared_norm(nvars: int = 3) -> Polynomial:
    return sum((Polynomial.variable(i, nvars) ** 2 for i in range(nvars)), Polynomial.constant(0.0, nvars))


def homogenize(F: Polynomial, tol: float = 1e-14) -> Polynomial:
    """Homogeneous polynomial of degree 2M agreeing with the even ``F`` on the unit sphere."""
    if not F.is_even(tol):
        raise ContractError("homogenize needs an even polynomial")
    M = F.degree // 2
    s = squared_norm(F.nvars)
    out = Polynomial.constant(0.0, F.nvars)
    for j in range(M + 1):
        part = F.homogeneous_part(2 * j)
        if part.terms:
            out = out + part * s ** (M - j)
    return out
