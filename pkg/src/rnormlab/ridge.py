"""Ridge functions with piecewise-linear profiles.

The R-norm of a ridge function ``x -> phi(u^T x)`` on the ball of radius
``sqrt(d)`` is the total variation of ``phi'`` over ``[-sqrt(d), sqrt(d)]``;
for piecewise-linear profiles that is the sum of absolute slope changes at the
knots inside the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .cube import signed_directions
from .nets import UNIT_TOL, TwoLayerNet

KNOT_GAP = 1e-12
MERGE_GAP = 1e-9


class InfeasibleError(ValueError):
    """No function of the requested kind satisfies the data constraints."""


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function of one variable.

    Parameters
    ----------
    z : array_like
        Strictly increasing knot abscissae (consecutive gap above 1e-12).
    values : array_like
        Function values at the knots.
    left_slope, right_slope : float
        Slopes of the affine tails before the first and after the last knot.
    """

    z: np.ndarray
    values: np.ndarray
    left_slope: float = 0.0
    right_slope: float = 0.0

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        y = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if z.size == 0 or z.shape != y.shape:
            raise ValueError("need at least one knot and one value per knot")
        if np.any(np.diff(z) <= KNOT_GAP):
            raise ValueError("knot abscissae must be strictly increasing")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))
                and math.isfinite(self.left_slope) and math.isfinite(self.right_slope)):
            raise ValueError("profile must be finite")
        z.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "left_slope", float(self.left_slope))
        object.__setattr__(self, "right_slope", float(self.right_slope))

    @classmethod
    def from_knots(cls, knots: Sequence[tuple[float, float]], left_slope: float = 0.0,
                   right_slope: float = 0.0) -> "PiecewiseLinearFn":
        arr = np.asarray(knots, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1], left_slope, right_slope)

    @classmethod
    def affine(cls, slope: float, intercept: float = 0.0) -> "PiecewiseLinearFn":
        return cls([0.0], [intercept], slope, slope)

    @classmethod
    def hinge(cls, knot: float, slope: float) -> "PiecewiseLinearFn":
        """``slope * max(0, z - knot)``."""
        return cls([knot], [0.0], 0.0, slope)

    @classmethod
    def from_callable(cls, f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                      n: int = 4097) -> "PiecewiseLinearFn":
        """Sample ``f`` on a uniform grid of ``n`` points; tails continue the end segments."""
        z = np.linspace(lo, hi, n)
        y = np.asarray(f(z), dtype=np.float64)
        s = np.diff(y) / np.diff(z)
        return cls(z, y, s[0], s[-1])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.z.tolist(), self.values.tolist()))

    def segment_slopes(self) -> np.ndarray:
        """Slopes of the ``K + 1`` pieces, tails included."""
        inner = np.diff(self.values) / np.diff(self.z)
        return np.concatenate([[self.left_slope], inner, [self.right_slope]])

    def slope_changes(self) -> np.ndarray:
        """Slope jump at each knot."""
        return np.diff(self.segment_slopes())

    def __call__(self, t: Any) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        out = np.interp(t, self.z, self.values)
        out = np.where(t < self.z[0], self.values[0] + self.left_slope * (t - self.z[0]), out)
        out = np.where(t > self.z[-1], self.values[-1] + self.right_slope * (t - self.z[-1]), out)
        return float(out) if out.ndim == 0 else out

    def restrict(self, lo: float, hi: float) -> "PiecewiseLinearFn":
        """Equivalent profile on ``[lo, hi]`` keeping only knots strictly inside."""
        if not lo < hi:
            raise ValueError("need lo < hi")
        inside = (self.z > lo) & (self.z < hi)
        slopes = self.segment_slopes()
        if not np.any(inside):
            mid = 0.5 * (lo + hi)
            seg = int(np.searchsorted(self.z, mid, side="right"))
            return PiecewiseLinearFn([mid], [self(mid)], slopes[seg], slopes[seg])
        idx = np.flatnonzero(inside)
        return PiecewiseLinearFn(self.z[idx], self.values[idx], slopes[idx[0]], slopes[idx[-1] + 1])

    def scale_input(self, s: float) -> "PiecewiseLinearFn":
        """Profile ``z -> phi(s z)`` for ``s != 0``."""
        if s == 0:
            raise ValueError("input scale must be nonzero")
        z = self.z / s
        if s > 0:
            return PiecewiseLinearFn(z, self.values, self.left_slope * s, self.right_slope * s)
        return PiecewiseLinearFn(z[::-1], self.values[::-1], self.right_slope * s, self.left_slope * s)

    def add_affine(self, slope: float, intercept: float = 0.0) -> "PiecewiseLinearFn":
        return PiecewiseLinearFn(self.z, self.values + slope * self.z + intercept,
                                 self.left_slope + slope, self.right_slope + slope)

    def __mul__(self, alpha: float) -> "PiecewiseLinearFn":
        alpha = float(alpha)
        return PiecewiseLinearFn(self.z, alpha * self.values, alpha * self.left_slope,
                                 alpha * self.right_slope)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class RidgeFn:
    """Ridge function ``x -> profile(direction^T x)`` with a unit direction."""

    profile: PiecewiseLinearFn
    direction: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.direction, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise ValueError("ridge direction must have unit norm")
        u.setflags(write=False)
        object.__setattr__(self, "direction", u)

    @property
    def d(self) -> int:
        return int(self.direction.shape[0])

    def __call__(self, X: Any) -> np.ndarray | float:
        X = np.asarray(X, dtype=np.float64)
        return self.profile(X @ self.direction)


def tv_prime(p: PiecewiseLinearFn, domain: tuple[float, float]) -> float:
    """Total variation of ``p'`` on an interval: sum of ``|slope jumps|`` at interior knots."""
    lo, hi = domain
    if not lo < hi:
        raise ValueError("need lo < hi")
    inside = (p.z > lo) & (p.z < hi)
    return float(np.sum(np.abs(p.slope_changes()[inside])))


def ridge_rnorm(r: RidgeFn) -> float:
    """Exact R-norm of a ridge function on the ball of radius sqrt(d)."""
    sd = math.sqrt(r.d)
    return tv_prime(r.profile, (-sd, sd))


def pwl_to_net(r: RidgeFn, restrict: bool = True) -> TwoLayerNet:
    """One ReLU per knot along the ridge direction, left tail in the skip weights.

    With ``restrict`` the profile is first reduced to its knots inside
    ``(-sqrt(d), sqrt(d))``, which leaves the function on the domain unchanged.
    Otherwise a knot outside the admissible bias range raises ``ValueError``.
    """
    d = r.d
    sd = math.sqrt(d)
    p = r.profile
    if restrict:
        p = p.restrict(-sd, sd)
    elif np.any(np.abs(p.z) > sd * (1 + 1e-12)):
        raise ValueError("profile knot outside the bias range [-sqrt(d), sqrt(d)]")
    jumps = p.slope_changes()
    nz = jumps != 0.0
    u = r.direction
    m = int(np.count_nonzero(nz))
    v = p.left_slope * u
    c = float(p.values[0] - p.left_slope * p.z[0])
    return TwoLayerNet(d, jumps[nz], np.tile(u, (m, 1)), -p.z[nz], v, c)


def sawtooth_profile(d: int, t: int, sign: float = 1.0) -> PiecewiseLinearFn:
    """Triangular wave through ``(-t-1, 0), (t - 2k, (-1)^k) for k=0..t, (t+1, 0)``.

    Abscissae are in units of ``w^T x`` for a sign vector ``w``.
    """
    inner = np.arange(-t, t + 1, 2, dtype=np.float64)
    s = np.concatenate([[-t - 1.0], inner, [t + 1.0]])
    k = (t - inner) // 2
    vals = np.zeros(s.shape[0])
    vals[1:-1] = np.where(k % 2 == 0, 1.0, -1.0)
    return PiecewiseLinearFn(s, sign * vals, 0.0, 0.0)


def sawtooth(w: Sequence[float], t: int) -> tuple[RidgeFn, TwoLayerNet]:
    """Sawtooth ridge function equal to ``chi(x) * 1{|w^T x| <= t}`` on the cube.

    Parameters
    ----------
    w : sequence of +-1
        Sign vector defining the ridge direction ``w / sqrt(d)``.
    t : int
        Band half-width, ``0 <= t <= d`` and ``t = d (mod 2)``.

    Returns
    -------
    ridge : RidgeFn
        Profile rescaled to the unit direction (knots at ``k/sqrt(d)``).
    net : TwoLayerNet
        At most ``t + 3`` neurons.

    Notes
    -----
    On a cube point with ``w^T x = t - 2k`` the parity is
    ``chi(w) (-1)^((d-t)/2) (-1)^k``, so the wave is multiplied by
    ``chi(w) (-1)^((d-t)/2)``.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    d = w.shape[0]
    if not np.all(np.abs(w) == 1.0):
        raise ValueError("w must be a sign vector")
    t = int(t)
    if t < 0 or t > d:
        raise ValueError("t must lie in [0, d]")
    if (d - t) % 2:
        raise ValueError("t must have the same parity as d")
    sign = float(np.prod(w)) * (-1.0) ** ((d - t) // 2)
    sd = math.sqrt(d)
    ridge = RidgeFn(sawtooth_profile(d, t, sign).scale_input(sd), w / sd)
    return ridge, pwl_to_net(ridge)


def truncation_profile(phi: PiecewiseLinearFn | Callable, L: float, t: float, delta: float,
                       limit: float | None = None) -> PiecewiseLinearFn:
    """Truncated interpolant of an L-Lipschitz profile with values in [-1, 1].

    ``ceil(2 t L / delta)`` equally spaced knots interpolate ``phi`` on
    ``[-t, t]``; outside, slope-``L`` ramps bring the value to zero by
    ``|z| = t + 1/L``. With ``limit`` the band is capped at ``limit`` and no
    ramp is added on a capped side (used when the band covers the domain).
    """
    if L <= 0 or delta <= 0 or t <= 0:
        raise ValueError("L, t and delta must be positive")
    capped = limit is not None and t >= limit
    band = min(t, limit) if capped else t
    n = max(2, math.ceil(2 * band * L / delta))
    z = np.linspace(-band, band, n)
    y = np.asarray(phi(z), dtype=np.float64).reshape(-1)
    if y.shape != z.shape:
        y = np.array([float(phi(zi)) for zi in z])
    if capped:
        s = np.diff(y) / np.diff(z)
        return PiecewiseLinearFn(z, y, s[0], s[-1])
    zs, ys = [z], [y]
    if abs(y[0]) > 0:
        zs.insert(0, [-band - abs(y[0]) / L])
        ys.insert(0, [0.0])
    if abs(y[-1]) > 0:
        zs.append([band + abs(y[-1]) / L])
        ys.append([0.0])
    return PiecewiseLinearFn(np.concatenate(zs), np.concatenate(ys), 0.0, 0.0)


def truncate_lipschitz(phi: PiecewiseLinearFn | Callable, L: float, t: float, delta: float,
                       direction: Sequence[float]) -> TwoLayerNet:
    """Ridge network approximating ``phi(v^T x)`` on the band ``|v^T x| <= t``.

    The network is within ``delta`` of the target on the band, vanishes for
    ``|v^T x| >= t + 1/L`` and has R-norm at most ``TRUNCATION_CONST * t L^2 / delta``.

    Parameters
    ----------
    phi : PiecewiseLinearFn or callable
        L-Lipschitz profile with values in [-1, 1] (asserted by the caller).
    L : float
        Lipschitz constant, at least 1.
    t : float
        Band half-width in ``[1, sqrt(d) - 1]``.
    delta : float
        Accuracy in ``(0, 1)``.
    direction : sequence of float
        Unit direction ``v``.
    """
    u = np.asarray(direction, dtype=np.float64).reshape(-1)
    d = u.shape[0]
    sd = math.sqrt(d)
    if not (1.0 - 1e-12 <= t <= sd - 1.0 + 1e-12):
        raise ValueError(f"t must lie in [1, sqrt(d) - 1] = [1, {sd - 1:.6g}]")
    if L < 1:
        raise ValueError("L must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return pwl_to_net(RidgeFn(truncation_profile(phi, L, t, delta), u))


# Knots number N = ceil(2tL/delta) >= 2, each jump is at most 2L, plus two ramp
# ends of at most L and 2L: R <= 2L (N + 2) <= 4tL^2/delta + 6L <= 10 tL^2/delta
# for t, L >= 1 and delta < 1.
TRUNCATION_CONST = 10.0


@dataclass(frozen=True, eq=False)
class RidgeVPResult:
    """Ridge interpolant for one direction.

    ``exact`` is true for the secant formula (``eps = 0``) and false for the
    knot-restricted tube LP, whose value is an upper bound on the ridge optimum.
    """

    ridge: RidgeFn
    value: float
    exact: bool


def _xy(data: Any) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.points, data.labels
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("points and labels differ in length")
    return X, y


def _project_clusters(z: np.ndarray, y: np.ndarray):
    """Sort projections and group those closer than ``MERGE_GAP``."""
    order = np.argsort(z, kind="stable")
    z, y = z[order], y[order]
    new = np.concatenate([[True], np.diff(z) > MERGE_GAP])
    lab = np.cumsum(new) - 1
    k = int(lab[-1]) + 1
    zc = np.bincount(lab, weights=z, minlength=k) / np.bincount(lab, minlength=k)
    ymax = np.full(k, -np.inf)
    ymin = np.full(k, np.inf)
    np.maximum.at(ymax, lab, y)
    np.minimum.at(ymin, lab, y)
    return zc, ymin, ymax


def _interpolant(zc: np.ndarray, yc: np.ndarray) -> PiecewiseLinearFn:
    if zc.shape[0] == 1:
        return PiecewiseLinearFn(zc, yc, 0.0, 0.0)
    s = np.diff(yc) / np.diff(zc)
    return PiecewiseLinearFn(zc, yc, s[0], s[-1])


def solve_ridge_vp(data: Any, direction: Sequence[float], eps: float = 0.0) -> RidgeVPResult:
    """Minimal-R-norm ridge fit of the data in a fixed unit direction.

    For ``eps = 0`` the piecewise-linear interpolant of the projected data is
    optimal (every interpolant's derivative takes each secant slope), so the
    value is ``sum_i |s_{i+1} - s_i|`` over consecutive secant slopes. For
    ``eps > 0`` the knots are restricted to the projected points and the
    slope variation is minimized by a linear program; the result is an upper
    bound (``exact=False``).

    Projections closer than 1e-9 are merged; with ``eps = 0`` their labels
    must agree to 1e-9, and in general the labels of a merged group must fit in
    one tube, otherwise :class:`InfeasibleError` is raised.
    """
    X, y = _xy(data)
    u = np.asarray(direction, dtype=np.float64).reshape(-1)
    if u.shape[0] != X.shape[1]:
        raise ValueError("direction dimension does not match the data")
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    zc, ymin, ymax = _project_clusters(X @ u, y)
    if eps == 0.0:
        tol = MERGE_GAP * np.maximum(1.0, np.maximum(np.abs(ymin), np.abs(ymax)))
        if np.any(ymax - ymin > tol):
            raise InfeasibleError("coincident projections carry different labels")
        prof = _interpolant(zc, 0.5 * (ymin + ymax))
        return RidgeVPResult(RidgeFn(prof, u), tv_prime(prof, (-np.inf, np.inf)), True)

    lo, hi = ymax - eps, ymin + eps
    if np.any(lo > hi + 1e-12):
        raise InfeasibleError("coincident projections cannot share one eps-tube")
    hi = np.maximum(hi, lo)
    m = zc.shape[0]
    if m <= 2:
        prof = _interpolant(zc, 0.5 * (lo + hi))
        return RidgeVPResult(RidgeFn(prof, u), 0.0, False)
    prof = _ridge_tube_lp(zc, lo, hi)
    return RidgeVPResult(RidgeFn(prof, u), tv_prime(prof, (-np.inf, np.inf)), False)


def _ridge_tube_lp(zc: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> PiecewiseLinearFn:
    m = zc.shape[0]
    inv_h = 1.0 / np.diff(zc)
    r = np.arange(m - 2)
    # row i: slope change at knot i+1 as a function of the values
    D = sparse.csr_matrix(
        (np.concatenate([inv_h[:-1], -(inv_h[:-1] + inv_h[1:]), inv_h[1:]]),
         (np.tile(r, 3), np.concatenate([r, r + 1, r + 2]))),
        shape=(m - 2, m),
    )
    eye = sparse.identity(m - 2, format="csr")
    A = sparse.vstack([sparse.hstack([D, -eye]), sparse.hstack([-D, -eye])], format="csr")
    cost = np.concatenate([np.zeros(m), np.ones(m - 2)])
    bounds = list(zip(lo, hi)) + [(0, None)] * (m - 2)
    res = linprog(cost, A_ub=A, b_ub=np.zeros(2 * (m - 2)), bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise InfeasibleError(f"ridge tube LP failed: {res.message}")
    vals = np.clip(res.x[:m], lo, hi)
    return _interpolant(zc, vals)


def ridge_direction_bound(w: Sequence[float]) -> float:
    """Lower bound on the R-norm of any ridge 1/2-approximant of full parity.

    For direction ``w`` (normalized here) with all coordinates nonzero, the
    alternating chain ``x^(i) = (sign w_1, ..., sign w_i, -sign w_{i+1}, ...)``
    forces ``TV(phi') >= d^2 / (2 w^T (x^(d) - x^(0))) = d^2 / (4 |w|_1)``.
    A zero coordinate admits no ridge 1/2-approximant; ``inf`` is returned.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    n = np.linalg.norm(w)
    if n == 0:
        return math.inf
    w = w / n
    if np.any(np.abs(w) <= 1e-12):
        return math.inf
    d = w.shape[0]
    s = np.sign(w)
    return float(d**2 / (2.0 * (w @ (s - (-s)))))


@dataclass
class RidgeSearchResult:
    best: RidgeFn | None
    value: float
    table: list[dict] = field(default_factory=list)
    directions: np.ndarray | None = None


def direction_pool(data: Any, pool: dict | None = None, seed: int = 0) -> tuple[np.ndarray, list[str]]:
    """Unit directions for the ridge search.

    ``pool`` keys: ``hypercube`` (True for all ``2^(d-1)`` signed directions,
    or a count to sample; default all when ``d <= 12``), ``differences``
    (number of sampled normalized data differences, ``"all"`` for every pair,
    default 1000), ``random`` (number of Gaussian directions, default 10^4) and
    ``directions`` (explicit array). Directions are deduplicated up to sign.
    """
    X, _ = _xy(data)
    d = X.shape[1]
    pool = dict(pool or {})
    rng = np.random.default_rng(seed)
    blocks, labels = [], []
    hc = pool.get("hypercube", d <= 12)
    if hc:
        if hc is True:
            S = signed_directions(d)
        else:
            S = rng.choice([-1.0, 1.0], size=(int(hc), d))
        blocks.append(S / math.sqrt(d))
        labels += ["hypercube"] * S.shape[0]
    nd = pool.get("differences", 1000)
    if nd and X.shape[0] >= 2:
        if nd == "all":
            i, j = np.triu_indices(X.shape[0], 1)
        else:
            i = rng.integers(0, X.shape[0], size=int(nd))
            j = rng.integers(0, X.shape[0], size=int(nd))
        D = X[i] - X[j]
        nrm = np.linalg.norm(D, axis=1)
        D = D[nrm > 0] / nrm[nrm > 0, None]
        blocks.append(D)
        labels += ["difference"] * D.shape[0]
    nr = int(pool.get("random", 10_000))
    if nr:
        G = rng.standard_normal((nr, d))
        blocks.append(G / np.linalg.norm(G, axis=1, keepdims=True))
        labels += ["random"] * nr
    if pool.get("directions") is not None:
        E = np.atleast_2d(np.asarray(pool["directions"], dtype=np.float64))
        blocks.append(E / np.linalg.norm(E, axis=1, keepdims=True))
        labels += ["explicit"] * E.shape[0]
    if not blocks:
        raise ValueError("empty direction pool")
    U = np.vstack(blocks)
    # canonical sign and dedupe, keeping first occurrence
    first = np.argmax(np.abs(U) >= 0.5 / math.sqrt(d), axis=1)
    U = U * np.sign(U[np.arange(U.shape[0]), first])[:, None]
    _, keep = np.unique(np.round(U, 12), axis=0, return_index=True)
    keep = np.sort(keep)
    return U[keep], [labels[k] for k in keep]


def search_ridge_vp(data: Any, eps: float = 0.0, pool: dict | None = None,
                    seed: int = 0) -> RidgeSearchResult:
    """Best ridge fit over a pool of directions.

    Returns the minimizing ridge function, its value and a per-direction table
    with fields ``direction_id, source, feasible, value, certificate_bound``.
    A direction whose data cannot be fitted is recorded as infeasible; if every
    direction is infeasible, :class:`InfeasibleError` is raised.
    """
    U, sources = direction_pool(data, pool, seed)
    best, best_val = None, math.inf
    table = []
    for k, u in enumerate(U):
        row = {"direction_id": k, "source": sources[k], "feasible": True, "value": None,
               "certificate_bound": ridge_direction_bound(u)}
        try:
            res = solve_ridge_vp(data, u, eps)
        except InfeasibleError:
            row["feasible"] = False
        else:
            row["value"] = res.value
            if res.value < best_val:
                best, best_val = res.ridge, res.value
        table.append(row)
    if best is None:
        raise InfeasibleError("no direction in the pool admits a ridge fit")
    return RidgeSearchResult(best, best_val, table, U)
