"""Boolean hypercube enumeration and parity helpers."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

MAX_CUBE_DIM = 20


def cube(d: int, order: str = "gray") -> np.ndarray:
    """Enumerate all points of ``{-1, 1}^d``.

    Parameters
    ----------
    d : int
        Dimension, ``0 <= d <= 20``.
    order : {"gray", "lex"}
        ``"lex"`` lists corners in lexicographic order with ``-1 < 1`` and the
        first coordinate most significant. ``"gray"`` lists them in binary
        reflected Gray code order, so consecutive points differ in one
        coordinate.

    Returns
    -------
    ndarray of shape (2**d, d)
    """
    if d < 0 or d > MAX_CUBE_DIM:
        raise ValueError(f"cube dimension must be in [0, {MAX_CUBE_DIM}], got {d}")
    idx = np.arange(2**d, dtype=np.int64)
    if order == "gray":
        idx = idx ^ (idx >> 1)
    elif order != "lex":
        raise ValueError(f"unknown order {order!r}")
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    return (2.0 * bits - 1.0).astype(np.float64)


def parity(X: np.ndarray, S: Iterable[int] | None = None) -> np.ndarray:
    """Evaluate ``chi_S(x) = prod_{i in S} x_i`` row-wise (0-based ``S``).

    ``S=None`` means all coordinates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if S is None:
        return np.prod(X, axis=1)
    S = list(S)
    if not S:
        return np.ones(X.shape[0])
    return np.prod(X[:, S], axis=1)


def signed_directions(d: int) -> np.ndarray:
    """All ``2**(d-1)`` sign vectors in ``{-1, 1}^d`` with first entry ``+1``."""
    if d < 1:
        raise ValueError("d must be positive")
    rest = cube(d - 1, order="lex")
    return np.hstack([np.ones((rest.shape[0], 1)), rest])


def level_probability(d: int, level: int) -> float:
    """``P(1^T x = level)`` for uniform ``x`` on the cube, exact up to rounding."""
    if (level + d) % 2 or abs(level) > d:
        return 0.0
    return math.comb(d, (d + level) // 2) / 2**d


def band_probability(d: int, t: int) -> float:
    """``P(|w^T x| <= t)`` for any sign vector ``w``, from exact binomials."""
    if (d - t) % 2:
        raise ValueError("t must have the parity of d")
    num = sum(math.comb(d, (d + s) // 2) for s in range(-t, t + 1, 2))
    return num / 2**d


def is_sign_vector(w: Sequence[float]) -> bool:
    w = np.asarray(w, dtype=float)
    return bool(np.all(np.abs(np.abs(w) - 1.0) == 0.0))
