"""Truncated Taylor polynomials for exp(x) with grid-certified relative error."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegreeOverflowError

GRID_POINTS = 10_001
MAX_DEGREE = 64


@dataclass(frozen=True)
class PolyApprox:
    g: int
    coeffs: tuple[float, ...]
    domain: float | None = None
    rel_err: float | None = None

    def __post_init__(self):
        if len(self.coeffs) != self.g + 1:
            raise ValueError("coeffs must have g + 1 entries")


def taylor_coeffs(g: int) -> tuple[float, ...]:
    return tuple(1.0 / math.factorial(l) for l in range(g + 1))


def taylor_poly(g: int) -> PolyApprox:
    # odd truncations of exp have a real root, which breaks the denominators
    if g < 0 or g % 2:
        raise ValueError(f"degree must be even and non-negative, got {g}")
    return PolyApprox(g=g, coeffs=taylor_coeffs(g))


def eval_poly(P: PolyApprox, x):
    """Horner evaluation; works on scalars and numpy arrays alike."""
    acc = 0.0
    for c in reversed(P.coeffs):
        acc = acc * x + c
    return acc


def relative_error(P: PolyApprox, D: float) -> float:
    D = abs(float(D))
    xs = np.linspace(-D, D, GRID_POINTS)
    ex = np.exp(xs)
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.abs(eval_poly(P, xs) - ex) / ex
    if not np.all(np.isfinite(err)):
        return math.inf
    return float(err.max())


def certify(P: PolyApprox, D: float) -> float:
    """Max of |P(x) - exp(x)| / exp(x) over 10 001 equispaced points in [-D, D]."""
    if D < 0:
        raise ValueError("D must be non-negative")
    return relative_error(P, D)


def certified(P: PolyApprox, D: float) -> PolyApprox:
    """Copy of ``P`` with ``domain`` and ``rel_err`` filled in."""
    return replace(P, domain=float(D), rel_err=certify(P, D))


def choose_degree(eps_rel: float, D: float) -> int:
    """Smallest even degree in [2, 64] whose certified error is <= eps_rel."""
    if not 0 < eps_rel < 1:
        raise ValueError("eps_rel must lie in (0, 1)")
    if D < 0:
        raise ValueError("D must be non-negative")
    for g in range(2, MAX_DEGREE + 1, 2):
        if relative_error(taylor_poly(g), D) <= eps_rel:
            return g
    raise DegreeOverflowError(
        f"no even degree <= {MAX_DEGREE} reaches relative error {eps_rel:g} on [-{D:g}, {D:g}]"
    )
