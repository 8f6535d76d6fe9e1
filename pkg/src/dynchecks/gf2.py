"""Dense GF(2) linear algebra on ``numpy.uint8`` arrays."""

from __future__ import annotations

import numpy as np


def as_bits(a) -> np.ndarray:
    return (np.asarray(a) & 1).astype(np.uint8)


def matmul(a, b) -> np.ndarray:
    """Matrix product over GF(2)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return (a @ b & 1).astype(np.uint8)


def row_reduce(m) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and the pivot columns.

    Pivot rows are chosen as the lowest-index candidate so the result is
    deterministic.
    """
    m = as_bits(m).copy()
    rows, cols = m.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(m[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        hits = np.flatnonzero(m[:, c])
        hits = hits[hits != r]
        m[hits] ^= m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def rank(m) -> int:
    m = np.asarray(m)
    if m.size == 0:
        return 0
    return len(row_reduce(m)[1])


def inv(m) -> np.ndarray:
    """Inverse of a square GF(2) matrix.

    Raises ``np.linalg.LinAlgError`` when the matrix is singular.
    """
    m = as_bits(m)
    n, k = m.shape
    if n != k:
        raise ValueError(f"not square: {m.shape}")
    red, pivots = row_reduce(np.hstack([m, np.eye(n, dtype=np.uint8)]))
    if pivots[:n] != list(range(n)):
        raise np.linalg.LinAlgError("matrix is singular over GF(2)")
    return red[:, n:].copy()


def is_invertible(m) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and rank(m) == m.shape[0]


def solve_left(a, b) -> np.ndarray | None:
    """Find ``x`` with ``x @ a == b``, or ``None``.

    A 1-d ``b`` gives a 1-d ``x``; a 2-d ``b`` is solved row by row.
    """
    a = as_bits(a)
    b = as_bits(b)
    flat = b.ndim == 1
    b = b.reshape(-1, a.shape[1])
    # x a = b  <=>  a^T x^T = b^T
    n = a.shape[0]
    red, pivots = row_reduce(np.hstack([a.T, b.T]))
    if any(p >= n for p in pivots):
        return None
    x = np.zeros((b.shape[0], n), dtype=np.uint8)
    for r, c in enumerate(pivots):
        x[:, c] = red[r, n:]
    return x[0] if flat else x


def left_kernel(a) -> np.ndarray:
    """Basis (as rows) of ``{x : x @ a == 0}``."""
    a = as_bits(a)
    n = a.shape[0]
    red, pivots = row_reduce(np.hstack([a, np.eye(n, dtype=np.uint8)]))
    k = a.shape[1]
    return red[len([p for p in pivots if p < k]):, k:].copy()


def same_row_space(a, b) -> bool:
    a = as_bits(a)
    b = as_bits(b)
    ra = rank(a)
    return ra == rank(b) == rank(np.vstack([a, b]))
