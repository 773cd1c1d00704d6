import math

import numpy as np
import pytest

from attnio.attention import (
    approx_attention,
    exact_attention,
    exp_via_attention,
    poly_error_budget,
    score_bound,
)
from attnio.core import gen_problem
from attnio.errors import EntriesTooLargeError


def softmax_oracle(Q, K, V):
    """Literal formula with Python floats and math.exp, no shift."""
    d = len(Q[0])
    out = []
    for q in Q:
        w = [math.exp(sum(a * b for a, b in zip(q, k)) / math.sqrt(d)) for k in K]
        s = sum(w)
        out.append([sum(wi * v[c] for wi, v in zip(w, V)) / s for c in range(len(V[0]))])
    return out


def test_exact_examples():
    assert exact_attention([[0.0]], [[0.0]], [[5.0]]).output.tolist() == [[5.0]]
    assert exact_attention([[1.0]], [[1.0]], [[3.0]]).output.tolist() == [[3.0]]
    V = np.array([[1.0, 2.0], [3.0, -4.0]])
    out = exact_attention(np.zeros((2, 2)), np.array([[0.3, 0.1], [-0.2, 0.4]]), V).output
    assert np.allclose(out, [[2.0, -1.0], [2.0, -1.0]], atol=1e-15)


def test_exact_matches_literal_formula():
    p = gen_problem(6, 3, 1.0, 2.0, 5)
    got = exact_attention(p.Q, p.K, p.V)
    want = softmax_oracle(p.Q.tolist(), p.K.tolist(), p.V.tolist())
    assert np.allclose(got.output, want, rtol=1e-12, atol=1e-14)
    denom = [sum(math.exp(q @ k / math.sqrt(3)) for k in p.K) for q in p.Q]
    assert np.allclose(got.row_sums, denom, rtol=1e-12)


def test_exact_rows_are_convex_combinations():
    p = gen_problem(20, 4, 2.0, 3.0, 8)
    out = exact_attention(p.Q, p.K, p.V).output
    lo, hi = p.V.min(axis=0), p.V.max(axis=0)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_exact_rejects_bad_input():
    with pytest.raises(ValueError):
        exact_attention([[float("inf")]], [[0.0]], [[1.0]])
    with pytest.raises(ValueError):
        exact_attention(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))


def test_score_bound_and_budget():
    Q = np.array([[0.5, -0.25]])
    K = np.array([[0.1, 0.4]])
    assert score_bound(Q, K) == pytest.approx(math.sqrt(2) * 0.25)
    assert poly_error_budget(1e-2, np.array([[-3.0, 1.0]])) == pytest.approx(1e-2 / 16)


def test_approx_zero_values():
    p = gen_problem(8, 4, 0.5, 0.0, 2)
    assert np.all(approx_attention(p.Q, p.K, p.V, 1e-2).output == 0.0)


def test_approx_spec_instance():
    p = gen_problem(64, 8, 0.5, 1.0, 1)
    res = approx_attention(p.Q, p.K, p.V, 1e-2)
    assert np.abs(res.output - exact_attention(p.Q, p.K, p.V).output).max() <= 1e-2
    assert np.all(res.row_sums > 0)


@pytest.mark.parametrize("seed", range(6))
def test_approx_random_instances(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(4, 129)), int(rng.integers(1, 9))
    p = gen_problem(n, d, float(rng.uniform(0.05, 0.5)), 1.0, seed)
    eps = float(rng.choice([1e-1, 1e-2, 1e-3]))
    res = approx_attention(p.Q, p.K, p.V, eps)
    assert np.abs(res.output - exact_attention(p.Q, p.K, p.V).output).max() <= eps
    assert res.degree % 2 == 0 and np.all(res.row_sums > 0)


def test_approx_entries_too_large():
    # Q = K with every score bound sqrt(d) B^2 = 100
    d = 4
    B = math.sqrt(100 / math.sqrt(d))
    Q = np.full((3, d), B)
    with pytest.raises(EntriesTooLargeError):
        approx_attention(Q, Q, np.ones((3, d)), 1e-3)


def test_approx_rejects_bad_eps():
    with pytest.raises(ValueError):
        approx_attention([[0.0]], [[0.0]], [[1.0]], 0.0)


def test_exp_examples():
    assert exp_via_attention(0.0) == 1.0
    assert exp_via_attention(1.0) == pytest.approx(math.e, abs=1e-9)
    assert exp_via_attention(-2.0) == pytest.approx(0.1353352832366127, abs=1e-9)
    with pytest.raises(OverflowError):
        exp_via_attention(31.0)
    with pytest.raises(OverflowError):
        exp_via_attention(float("nan"))
