"""Error metrics against cube targets and neuron-parity correlations."""

from __future__ import annotations

import math
from typing import Any, Callable

import numpy as np

from ..cube import cube, parity
from .datasets import Dataset

EXHAUSTIVE_MAX_D = 16
CORRELATION_MAX_D = 14
MC_SUP = 10**6
MC_L2 = 10**5
_CHUNK = 1 << 16


def _predict(f: Any, X: np.ndarray) -> np.ndarray:
    return np.asarray(f(X), dtype=np.float64).reshape(-1)


def _samples(d: int, measure: Any, n: int, seed: int):
    """Yield ``(X, weight)`` blocks for a measure on the cube."""
    if isinstance(measure, Dataset):
        if measure.n == 0:
            raise ValueError("empirical measure of an empty dataset")
        yield measure.points, np.full(measure.n, 1.0 / measure.n)
    elif measure == "exhaustive":
        if d > 20:
            raise ValueError("exhaustive enumeration limited to d <= 20")
        X = cube(d)
        for s in range(0, X.shape[0], _CHUNK):
            blk = X[s:s + _CHUNK]
            yield blk, np.full(blk.shape[0], 2.0**-d)
    elif measure == "mc":
        rng = np.random.default_rng(seed)
        for s in range(0, n, _CHUNK):
            m = min(_CHUNK, n - s)
            yield rng.choice([-1.0, 1.0], size=(m, d)), np.full(m, 1.0 / n)
    else:
        raise ValueError(f"unknown measure {measure!r}")


def _target_values(target: Any, X: np.ndarray) -> np.ndarray:
    return _predict(target, X)


def sup_error(net: Callable, target: Callable, d: int | None = None, mode: str = "auto",
              n: int = MC_SUP, seed: int = 0) -> float:
    """``max |g(x) - f(x)|`` over the cube (exhaustive) or over ``n`` uniform samples.

    ``mode="auto"`` is exhaustive for ``d <= 16``.
    """
    d = d if d is not None else net.d
    if mode == "auto":
        mode = "exhaustive" if d <= EXHAUSTIVE_MAX_D else "mc"
    worst = 0.0
    for X, _ in _samples(d, mode, n, seed):
        worst = max(worst, float(np.max(np.abs(_predict(net, X) - _target_values(target, X)))))
    return worst


def _mean_sq(net, target, d, measure, n, seed, clip: bool):
    total = 0.0
    for X, wt in _samples(d, measure, n, seed):
        g = _predict(net, X)
        if clip:
            g = np.clip(g, -1.0, 1.0)
        total += float(wt @ (g - _target_values(target, X)) ** 2)
    return total


def l2_error(net: Callable, target: Callable, measure: Any = "exhaustive", d: int | None = None,
             n: int = MC_L2, seed: int = 0) -> float:
    """``||g - f||`` in ``L^2`` of the uniform cube measure, its MC estimate, or an empirical measure."""
    d = d if d is not None else net.d
    return math.sqrt(_mean_sq(net, target, d, measure, n, seed, clip=False))


def mse_clip(net: Callable, target: Callable, measure: Any = "exhaustive", d: int | None = None,
             n: int = MC_L2, seed: int = 0) -> float:
    """Squared ``L^2`` error of ``clip(g) = min(max(g, -1), 1)``."""
    d = d if d is not None else net.d
    return _mean_sq(net, target, d, measure, n, seed, clip=True)


def neuron_parity_correlations(W: np.ndarray, b: np.ndarray, S=None) -> np.ndarray:
    """Exact ``<relu(w^T x + b), chi_S>`` under the uniform cube measure, row-wise."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    d = W.shape[1]
    if d > CORRELATION_MAX_D:
        raise ValueError(f"exhaustive correlation limited to d <= {CORRELATION_MAX_D}")
    X = cube(d)
    chi = parity(X, S) / 2.0**d
    out = np.empty(W.shape[0])
    step = max(1, (1 << 22) // X.shape[0])
    for s in range(0, W.shape[0], step):
        R = X @ W[s:s + step].T + b[s:s + step]
        np.maximum(R, 0.0, out=R)
        out[s:s + step] = chi @ R
    return out


def neuron_parity_correlation(w: Any, b: float, S=None) -> float:
    """Exact ``<r_{w,b}, chi>`` for one neuron with ``|w| <= 1`` and ``|b| <= 2 sqrt(d)``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if np.linalg.norm(w) > 1 + 1e-12:
        raise ValueError("|w| must be at most 1")
    if abs(b) > 2 * math.sqrt(w.size) * (1 + 1e-12):
        raise ValueError("|b| must be at most 2 sqrt(d)")
    return float(neuron_parity_correlations(w[None, :], [b], S)[0])


def sample_neurons(d: int, count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random ``(w, b)`` with ``|w| <= 1`` and ``|b| <= 2 sqrt(d)``.

    Half the rows are signed directions ``s/sqrt(d)`` (where parity correlation
    concentrates), half Gaussian directions shrunk by a uniform radius.
    """
    rng = np.random.default_rng(seed)
    h = count // 2
    S = rng.choice([-1.0, 1.0], size=(h, d)) / math.sqrt(d)
    G = rng.standard_normal((count - h, d))
    G *= (rng.random(count - h) / np.linalg.norm(G, axis=1))[:, None]
    W = np.vstack([S, G])
    b = rng.uniform(-2 * math.sqrt(d), 2 * math.sqrt(d), count)
    return W, b
