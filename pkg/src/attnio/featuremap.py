"""Monomial bases and the row expansions that turn P(q.k) into an inner product.

A row ``q`` maps to ``u`` with ``u[a] = c_|a| * multinomial(|a|; a) * q**a`` and a
row ``k`` maps to ``v`` with ``v[a] = k**a``, so ``u . v = sum_l c_l (q.k)**l``.
All polynomial coefficients live on the q side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np

from .errors import CapacityError
from .polyapprox import PolyApprox

MAX_BASIS = 10**7
_INT128_MAX = (1 << 127) - 1


def tau(w: int, g: int) -> int:
    """Number of monomials of degree <= g in w variables, C(w+g, g)."""
    if w < 0 or g < 0:
        raise ValueError("tau needs w >= 0 and g >= 0")
    value = math.comb(w + g, g)
    if value > _INT128_MAX:
        raise OverflowError(f"tau({w}, {g}) exceeds the 128-bit integer range")
    return value


def tau_identity_check(w: int, g: int) -> bool:
    """Compare sum_l C(w+l-1, l) against C(w+g, g), each computed on its own."""
    if w < 1:
        raise ValueError("identity is stated for w >= 1")
    lhs = sum(math.comb(w + l - 1, l) for l in range(g + 1))
    rhs = math.factorial(w + g) // (math.factorial(w) * math.factorial(g))
    return lhs == rhs


@dataclass(frozen=True)
class Monomial:
    exponents: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.exponents) if e)


def support(m: Monomial) -> int:
    return sum(1 for e in m.exponents if e)


def multinomial(exponents) -> int:
    out = math.factorial(sum(exponents))
    for e in exponents:
        out //= math.factorial(e)
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials of degree <= g in d variables, graded lexicographic order.

    Within one degree, exponent vectors appear in descending lexicographic
    order, so for d=2, g=2 the order is 1, x, y, x^2, xy, y^2.
    """

    d: int
    g: int
    monomials: tuple[Monomial, ...] = field(repr=False)

    def __len__(self):
        return len(self.monomials)

    @cached_property
    def exponents(self) -> np.ndarray:
        arr = np.array([m.exponents for m in self.monomials], dtype=np.int64).reshape(len(self), self.d)
        arr.setflags(write=False)
        return arr

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    @cached_property
    def multinomials(self) -> np.ndarray:
        return np.array([float(multinomial(m.exponents)) for m in self.monomials])

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {m.exponents: i for i, m in enumerate(self.monomials)}


def enumerate_basis(d: int, g: int) -> MonomialBasis:
    if d < 0 or g < 0:
        raise ValueError("need d >= 0 and g >= 0")
    size = tau(d, g)
    if size > MAX_BASIS:
        raise CapacityError(f"basis of {size} monomials is beyond desk scale")
    monos = []
    for l in range(g + 1):
        # index multisets in ascending lex order = exponent vectors in descending lex order
        for combo in combinations_with_replacement(range(d), l):
            exps = [0] * d
            for i in combo:
                exps[i] += 1
            monos.append(Monomial(tuple(exps)))
    return MonomialBasis(d=d, g=g, monomials=tuple(monos))


def q_coefficients(P: PolyApprox, basis: MonomialBasis) -> np.ndarray:
    """Per-monomial factor c_|a| * multinomial(a) folded into the q side."""
    if P.g != basis.g:
        raise ValueError(f"polynomial degree {P.g} does not match basis degree {basis.g}")
    c = np.asarray(P.coeffs, dtype=np.float64)
    return c[basis.degrees] * basis.multinomials


def _powers(x: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    # x has shape (..., d); result (..., r) with 0**0 == 1
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != basis.d:
        raise ValueError(f"rows must have length {basis.d}")
    return np.prod(x[..., None, :] ** basis.exponents, axis=-1)


def expand_row_q(q, P: PolyApprox, basis: MonomialBasis) -> np.ndarray:
    return q_coefficients(P, basis) * _powers(q, basis)


def expand_row_k(k, basis: MonomialBasis) -> np.ndarray:
    return _powers(k, basis)


def expand_q(Q, P: PolyApprox, basis: MonomialBasis) -> np.ndarray:
    """Row-wise ``expand_row_q`` over a matrix, giving U1 (n x r)."""
    return expand_row_q(np.asarray(Q, dtype=np.float64), P, basis)


def expand_k(K, basis: MonomialBasis) -> np.ndarray:
    """Row-wise ``expand_row_k`` over a matrix, giving U2 (n x r)."""
    return expand_row_k(np.asarray(K, dtype=np.float64), basis)


def halfcover_ratio(d: int, g: int) -> float:
    """C(d, g/2-1) * tau(g/2-1) / C(d+g, g) for even g and d >= 5g."""
    if g < 2 or g % 2:
        raise ValueError("g must be even and >= 2")
    if d < 5 * g:
        raise ValueError(f"ratio is only meaningful for d >= 5g (d={d}, g={g})")
    h = g // 2 - 1
    num = math.comb(d, h) * math.comb(h + g, g)
    return num / math.comb(d + g, g)
