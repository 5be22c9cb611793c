"""Dense linear algebra helpers and seeded RNG.

Everything is float64. Matrices are row-major 2-D arrays, vectors 1-D.
All other modules funnel their numeric work through these few operations
so that the shape conventions stay auditable in one place.
"""

from __future__ import annotations

import numpy as np

# Below this, the sum in normalize_simplex counts as zero and the result
# degenerates to the all-zeros vector instead of dividing.
SIMPLEX_EPS = 1e-8


class ShapeMismatchError(ValueError):
    """Operand dimensions are incompatible. Fatal configuration error."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeMismatchError(f"expected a 1-D vector, got ndim={v.ndim}")
    return v


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """out[j] = sum_i w[j, i] * x[i]."""
    w = as_matrix(w)
    x = as_vector(x)
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(
            f"matvec: matrix is {w.shape[0]}x{w.shape[1]} but vector has length {x.shape[0]}"
        )
    return w @ x


def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[j, i] = a[j] * b[i]."""
    return np.outer(as_vector(a), as_vector(b))


def colsum(a: np.ndarray) -> np.ndarray:
    """Per-column totals: out[i] = sum_j a[j, i]."""
    return as_matrix(a).sum(axis=0)


def normalize_simplex(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Divide a vector by the sum of its entries.

    Returns (normalized, degenerate). When |sum| < SIMPLEX_EPS the division
    is undefined; the result is the all-zeros vector and degenerate=True so
    callers can treat it as a neutral (no-modulation) signal.
    """
    x = as_vector(x)
    s = x.sum()
    if abs(s) < SIMPLEX_EPS:
        return np.zeros_like(x), True
    return x / s, False


def kaiming_uniform_init(
    rng: np.random.Generator, fan_in: int, rows: int, cols: int
) -> np.ndarray:
    """Entries i.i.d. uniform on [-sqrt(6/fan_in), +sqrt(6/fan_in)]."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))
