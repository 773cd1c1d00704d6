"""Exact softmax attention and its polynomial approximation.

Derating of the additive target ``eps`` into a relative polynomial error:
if every score exp(s) is replaced by a value within relative error e, each
normalised weight moves by at most 2e / (1 - e), so each output entry moves
by at most that times max|V|. Taking e = eps / (4 (1 + max|V|)) keeps the
total under eps for any e < 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import DegreeOverflowError, EntriesTooLargeError, PositivityError
from .featuremap import enumerate_basis, expand_k, expand_q
from .polyapprox import choose_degree, taylor_poly

EXP_GUARD = 30.0


@dataclass(frozen=True)
class AttentionResult:
    output: np.ndarray
    row_sums: np.ndarray
    degree: int | None = None


def _check_qkv(Q, K, V):
    Q = as_matrix(Q, name="Q")
    K = as_matrix(K, name="K")
    V = as_matrix(V, name="V")
    if not (Q.shape[1] == K.shape[1] and K.shape[0] == V.shape[0]):
        raise ValueError(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    return Q, K, V


def exact_attention(Q, K, V) -> AttentionResult:
    """softmax(Q K^T / sqrt(d)) V with max-subtraction for stability."""
    Q, K, V = _check_qkv(Q, K, V)
    d = Q.shape[1]
    scores = Q @ K.T / math.sqrt(d)
    shift = scores.max(axis=1, keepdims=True)
    weights = np.exp(scores - shift)
    denom = weights.sum(axis=1)
    out = (weights @ V) / denom[:, None]
    with np.errstate(over="ignore"):
        row_sums = denom * np.exp(shift[:, 0])
    return AttentionResult(output=as_matrix(out), row_sums=row_sums)


def score_bound(Q, K) -> float:
    """Upper bound sqrt(d) * B**2 on |(Q K^T / sqrt(d))_ij|, B the largest |entry|."""
    d = Q.shape[1]
    B = max(float(np.abs(Q).max(initial=0.0)), float(np.abs(K).max(initial=0.0)))
    return math.sqrt(d) * B * B


def poly_error_budget(eps: float, V) -> float:
    return eps / (4.0 * (1.0 + float(np.abs(V).max(initial=0.0))))


def approx_attention(Q, K, V, eps: float) -> AttentionResult:
    """Additive-error attention via the polynomial feature map.

    ``H = U2^T V`` is formed first and then multiplied by ``U1``; the row sums
    reuse the same two-step order with a column of ones.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    Q, K, V = _check_qkv(Q, K, V)
    d = Q.shape[1]
    D = score_bound(Q, K)
    eps_poly = min(poly_error_budget(eps, V), 0.5)
    try:
        g = choose_degree(eps_poly, D)
    except DegreeOverflowError as exc:
        raise EntriesTooLargeError(
            f"score bound {D:g} is too large for additive error {eps:g}"
        ) from exc
    P = taylor_poly(g)
    basis = enumerate_basis(d, g)
    U1 = expand_q(Q / math.sqrt(d), P, basis)
    U2 = expand_k(K, basis)
    H = U2.T @ V
    numer = U1 @ H
    row_sums = U1 @ (U2.T @ np.ones(U2.shape[0]))
    if np.any(row_sums <= 0):
        raise PositivityError("approximate softmax denominator is not positive")
    return AttentionResult(output=as_matrix(numer / row_sums[:, None]), row_sums=row_sums, degree=g)


def exp_via_attention(x: float) -> float:
    """exp(x) recovered from one attention call: Q=1, K^T=(x, 2x), V=(1; 0)."""
    if not abs(x) <= EXP_GUARD:
        raise OverflowError(f"|x| must be <= {EXP_GUARD:g}, got {x}")
    A = exact_attention([[1.0]], [[x], [2.0 * x]], [[1.0], [0.0]]).output[0, 0]
    return 1.0 / A - 1.0
