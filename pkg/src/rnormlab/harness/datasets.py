"""Labeled point sets on the hypercube and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from ..cube import MAX_CUBE_DIM, cube, parity


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points ``x_i`` in the ball of radius ``sqrt(d)`` with real labels.

    ``provenance`` records how the data were generated, e.g.
    ``{"kind": "sampled_parity", "S": None, "n": 100, "seed": 0}``.
    """

    d: int
    points: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "custom"})

    def __post_init__(self) -> None:
        X = np.asarray(self.points, dtype=np.float64).reshape(-1, self.d)
        y = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("number of points and labels differ")
        if X.shape[0] and np.max(np.einsum("ij,ij->i", X, X)) > self.d * (1 + 1e-9):
            raise ValueError("points must lie in the ball of radius sqrt(d)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def __len__(self) -> int:
        return self.n

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(self.d)] + ["y"])
        for x, y in zip(self.points, self.labels):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty dataset file")
        header = rows[0]
        d = len(header) - 1
        if d < 1 or header[-1] != "y" or header[:-1] != [f"x_{i + 1}" for i in range(d)]:
            raise ValueError("dataset header must be x_1,...,x_d,y")
        body = [r for r in rows[1:] if r]
        if any(len(r) != d + 1 for r in body):
            raise ValueError("row length does not match the header")
        arr = np.array(body, dtype=np.float64).reshape(-1, d + 1)
        return cls(d, arr[:, :d], arr[:, d], {"kind": "custom"})


def _check_S(d: int, S: Iterable[int] | None) -> tuple[int, ...] | None:
    if S is None:
        return None
    S = tuple(sorted(set(int(i) for i in S)))
    if any(i < 0 or i >= d for i in S):
        raise ValueError("S must be a subset of range(d)")
    return S


def gen_full_parity(d: int, S: Iterable[int] | None = None) -> Dataset:
    """All ``2^d`` cube points in lexicographic order labeled by ``chi_S``.

    ``S`` holds 0-based coordinates; ``None`` means all of them.
    """
    if d > MAX_CUBE_DIM:
        raise ValueError(f"d must be at most {MAX_CUBE_DIM}")
    S = _check_S(d, S)
    X = cube(d, order="lex")
    return Dataset(d, X, parity(X, S), {"kind": "full_parity", "S": S})


def gen_sampled_parity(d: int, n: int, S: Iterable[int] | None = None, seed: int = 0) -> Dataset:
    """``n`` i.i.d. uniform cube points (with replacement) labeled by ``chi_S``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    S = _check_S(d, S)
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(n, d))
    return Dataset(d, X, parity(X, S) if n else np.zeros(0),
                   {"kind": "sampled_parity", "S": S, "n": n, "seed": seed})


def cosine_rho(d: int, q: float) -> float:
    return 4.0 * q / math.sqrt(d)


def cosine_target(d: int, q: float):
    """``f(x) = cos(2 pi 1^T x / (rho sqrt(d)))`` with ``rho = 4q/sqrt(d)``."""
    freq = 2.0 * math.pi / (cosine_rho(d, q) * math.sqrt(d))

    def f(X: np.ndarray) -> np.ndarray:
        return np.cos(freq * np.sum(np.atleast_2d(X), axis=1))

    return f


def gen_cosine_dataset(d: int, q: float) -> Dataset:
    """All cube points labeled by the cosine ridge target of period ``rho = 4q/sqrt(d)``."""
    if d % 2:
        raise ValueError("d must be even")
    if d > MAX_CUBE_DIM:
        raise ValueError(f"d must be at most {MAX_CUBE_DIM}")
    X = cube(d, order="lex")
    return Dataset(d, X, cosine_target(d, q)(X), {"kind": "cosine", "q": q})
