"""Matrices, seeded problem generation and the reference matrix product.

Matrices are plain 2-D ``float64`` numpy arrays. ``as_matrix`` is the single
validation point: it enforces the 2-D shape and finiteness and hands back a
read-only copy, so values built here can be shared freely.

Random entries come from SplitMix64 used in counter mode. Entry ``i`` of the
stream is ``mix(seed + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` and the
uniform variate is ``(mix >> 11) * 2**-53``. Q, K and V consume consecutive
counter ranges in that order, row-major. The recipe is small enough to port to
any language bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def as_matrix(data, *, name: str = "matrix") -> np.ndarray:
    """Validate ``data`` as a finite 2-D float64 matrix and freeze a copy."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the counter-mode SplitMix64 stream."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + counters * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, start: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) with 53 random bits each."""
    bits = splitmix64(seed, start, count) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class ProblemInstance:
    n: int
    d: int
    B: float
    seed: int
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        for name in ("Q", "K", "V"):
            if getattr(self, name).shape != (self.n, self.d):
                raise ValueError(f"{name} must have shape ({self.n}, {self.d})")
        if self.n and max(np.abs(self.Q).max(), np.abs(self.K).max()) > self.B:
            raise ValueError("Q/K entries exceed the declared bound B")


def gen_problem(n: int, d: int, B: float, vmax: float, seed: int) -> ProblemInstance:
    """Seeded instance with Q, K ~ U[-B, B] and V ~ U[-vmax, vmax].

    ``B = 0`` or ``vmax = 0`` is accepted and yields all-zero matrices.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if not (B >= 0 and vmax >= 0) or not np.isfinite(B) or not np.isfinite(vmax):
        raise ValueError("B and vmax must be finite and non-negative")
    size = n * d
    u = uniform_stream(seed, 0, 3 * size)
    scale = np.repeat([B, B, vmax], size)
    vals = scale * (2.0 * u - 1.0)
    Q, K, V = (as_matrix(vals[k * size:(k + 1) * size].reshape(n, d)) for k in range(3))
    return ProblemInstance(n=n, d=d, B=float(B), seed=seed, Q=Q, K=K, V=V)


def matmul_ref(A, B) -> np.ndarray:
    """Plain triple-loop product; slow on purpose, used only as an oracle."""
    A = as_matrix(A, name="A")
    B = as_matrix(B, name="B")
    m, k = A.shape
    k2, p = B.shape
    if k != k2:
        raise ValueError(f"shape mismatch: {A.shape} x {B.shape}")
    a = A.tolist()
    b = B.tolist()
    out = [[0.0] * p for _ in range(m)]
    for i in range(m):
        ai = a[i]
        row = out[i]
        for j in range(p):
            s = 0.0
            for t in range(k):
                s += ai[t] * b[t][j]
            row[j] = s
    return as_matrix(np.array(out, dtype=np.float64).reshape(m, p))


def format_matrix(A) -> str:
    A = as_matrix(A)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in A]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    rows, cols = (int(x) for x in lines[0].split())
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    data = [[float(x) for x in ln.split()] for ln in body]
    if any(len(r) != cols for r in data):
        raise ValueError(f"every row must have {cols} entries")
    return as_matrix(np.array(data, dtype=np.float64).reshape(rows, cols))


def write_matrix(path, A) -> None:
    Path(path).write_text(format_matrix(A))


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())
