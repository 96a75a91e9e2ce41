"""Explicit interpolants: parity averages, the cap construction, periodic averaging."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .cube import band_probability, cube, parity
from .nets import TwoLayerNet, rnorm
from .ridge import PiecewiseLinearFn, RidgeFn, pwl_to_net, sawtooth_profile, truncation_profile

AUTO = "auto"
MAX_ATOMS = 2**20
FULL_AVERAGE_CAP = 14
EXHAUSTIVE_MAX_D = 16
MC_SUP_POINTS = 10**6


@dataclass(frozen=True)
class ParityTarget:
    """Parity ``chi_S`` on ``{-1, 1}^d``; ``S`` holds 0-based indices, ``None`` is all of them."""

    d: int
    S: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.S is not None:
            S = tuple(sorted(set(int(i) for i in self.S)))
            if any(i < 0 or i >= self.d for i in S):
                raise ValueError("S must be a subset of range(d)")
            object.__setattr__(self, "S", S)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return parity(X, self.S)


@dataclass(frozen=True, eq=False)
class PeriodicRidgeTarget:
    """Ridge target ``f(x) = phi(v^T x)`` with a rho-periodic, L-Lipschitz ``phi``.

    Periodicity and ``|phi| <= 1`` are checked on a sampling grid. The
    construction needs ``rho >= |v|_inf``; values above 1 are accepted with a
    warning.
    """

    v: np.ndarray
    rho: float
    phi: Callable[[np.ndarray], np.ndarray]
    L: float

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("v must be a unit vector")
        rho = float(self.rho)
        if rho < np.max(np.abs(v)) - 1e-12:
            raise ValueError("rho must be at least |v|_inf")
        if rho > 1.0:
            warnings.warn("rho > 1 lies outside the range covered by the error analysis",
                          RuntimeWarning, stacklevel=3)
        grid = np.linspace(-8 * rho, 8 * rho, 4001)
        a, b = np.asarray(self.phi(grid)), np.asarray(self.phi(grid + rho))
        if np.max(np.abs(a - b)) > 1e-9:
            raise ValueError("phi is not rho-periodic on the sampling grid")
        if np.max(np.abs(a)) > 1.0 + 1e-12:
            raise ValueError("phi must map into [-1, 1]")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "rho", rho)

    @property
    def d(self) -> int:
        return int(self.v.shape[0])

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.rho * float(np.sum(np.abs(self.v))) - 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.phi(np.atleast_2d(X) @ self.v), dtype=np.float64)


def sup_error_on_cube(net: TwoLayerNet, target: Callable, seed: int = 0,
                      n_mc: int = MC_SUP_POINTS) -> tuple[float, str]:
    """Max ``|g - f|`` over the cube, exhaustive up to ``d = 16``, else Monte Carlo."""
    d = net.d
    if d <= EXHAUSTIVE_MAX_D:
        X = cube(d)
        return float(np.max(np.abs(net(X) - target(X)))), "exhaustive"
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in range(0, n_mc, 1 << 16):
        X = rng.choice([-1.0, 1.0], size=(min(1 << 16, n_mc - s), d))
        worst = max(worst, float(np.max(np.abs(net(X) - target(X)))))
    return worst, "monte_carlo"


def _sawtooth_template(d: int, t: int) -> TwoLayerNet:
    """Sawtooth network for ``w = 1`` without the parity sign."""
    sd = math.sqrt(d)
    ridge = RidgeFn(sawtooth_profile(d, t).scale_input(sd), np.full(d, 1.0 / sd))
    return pwl_to_net(ridge)


def sawtooth_sum(signs: np.ndarray, t: int, weight: float = 1.0) -> TwoLayerNet:
    """``weight * sum_j s_{w_j, t}`` as one network, for sign vectors in rows of ``signs``.

    Equivalent to concatenating :func:`rnormlab.ridge.sawtooth` outputs, built
    in one vectorized pass.
    """
    signs = np.atleast_2d(np.asarray(signs, dtype=np.float64))
    k, d = signs.shape
    if (d - t) % 2 or not 0 <= t <= d:
        raise ValueError("t must lie in [0, d] with the parity of d")
    tmpl = _sawtooth_template(d, t)
    sd = math.sqrt(d)
    sgn = np.prod(signs, axis=1) * (-1.0) ** ((d - t) // 2) * weight
    m = tmpl.width
    a = np.outer(sgn, tmpl.a).reshape(-1)
    W = np.repeat(signs / sd, m, axis=0)
    b = np.tile(tmpl.b, k)
    # template skip weights are a multiple of the direction
    left = float(tmpl.v @ np.full(d, 1.0 / sd))
    v = left * (sgn @ signs) / sd
    c = tmpl.c * float(np.sum(sgn))
    return TwoLayerNet(d, a, W, b, v, c)


def parity_full_average(d: int, cap: int = FULL_AVERAGE_CAP) -> TwoLayerNet:
    """Average of all ``2^d`` width-0 sawtooths, rescaled to interpolate parity.

    ``g = (1 / (q 2^d)) sum_{w in {-1,1}^d} s_{w,0}`` with
    ``q = binom(d, d/2) / 2^d``; ``g = chi`` on the cube and
    ``rnorm(g) = 4 sqrt(d) / q``.
    """
    if d % 2 or d < 2:
        raise ValueError("d must be even and positive")
    if d > cap:
        raise ValueError(f"d={d} exceeds the cap {cap} (network has 3 * 2^d neurons)")
    q = band_probability(d, 0)
    return sawtooth_sum(cube(d, order="lex"), 0, 1.0 / (q * 2**d))


def random_average_k_start(d: int, t: int, eps: float, C: float = 1.0) -> tuple[int, int, int]:
    """Starting number of sawtooths, regime (1 or 2) and threshold ``T``."""
    T = 2 * math.ceil(math.sqrt(d / 2 * math.log(8 / eps)))
    if t <= T:
        k = C * d**1.5 * math.sqrt(math.log(1 / eps)) / (eps**2 * (t + 1))
        regime = 1
    else:
        k = C * d**2 / (eps * t**2)
        regime = 2
    return max(1, math.ceil(k)), regime, T


def parity_random_average(d: int, t: int, eps: float, k: int | str = AUTO, seed: int = 0,
                          C: float = 1.0, max_atoms: int = MAX_ATOMS) -> tuple[TwoLayerNet, dict]:
    """Average of ``k`` random width-``t`` sawtooths, ``(1/(kq)) sum_j s_{w_j, t}``.

    Here ``q = P(|w^T x| <= t)``. With ``k="auto"`` the count starts at the
    bound for the applicable regime (constant ``C``) and doubles until the sup
    error over the cube is at most ``eps`` or the width would exceed
    ``max_atoms``; the cap is reported, not raised.

    Returns
    -------
    net : TwoLayerNet
    report : dict
        ``params, seed, q, k, regime, T, sup_error, rnorm_upper, checks`` and
        bookkeeping fields.
    """
    if d % 2 or (d - t) % 2 or not 0 <= t <= d:
        raise ValueError("need even d and t in [0, d] with the parity of d")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    q = band_probability(d, t)
    k0, regime, T = random_average_k_start(d, t, eps, C)
    per = _sawtooth_template(d, t).width
    rng = np.random.default_rng(seed)
    target = ParityTarget(d)

    def build(kk: int, S: np.ndarray) -> tuple[TwoLayerNet, float, str]:
        net = sawtooth_sum(S[:kk], t, 1.0 / (kk * q))
        err, mode = sup_error_on_cube(net, target, seed)
        return net, err, mode

    auto = k == AUTO
    kk = k0 if auto else int(k)
    if kk < 1:
        raise ValueError("k must be positive")
    cap_hit = False
    if auto and kk * per > max_atoms:
        # the starting count alone exceeds the atom budget
        kk, cap_hit = max(1, max_atoms // per), True
    S = rng.choice([-1.0, 1.0], size=(kk, d))
    net, err, mode = build(kk, S)
    while auto and err > eps and not cap_hit:
        if 2 * kk * per > max_atoms:
            cap_hit = True
            break
        S = np.vstack([S, rng.choice([-1.0, 1.0], size=(kk, d))])
        kk *= 2
        net, err, mode = build(kk, S)
    S = S[:kk]
    mass_per = _sawtooth_template(d, t).l1_mass
    X = cube(d) if d <= EXHAUSTIVE_MAX_D else None
    sign_ok = None
    if X is not None:
        sign_ok = bool(np.all(net(X) * parity(X) >= -1e-9))
    report = {
        "construction": "parity_random_average",
        "params": {"d": d, "t": t, "eps": eps, "k": k if not auto else AUTO, "C": C},
        "seed": seed,
        "q": q,
        "k": kk,
        "k_start": k0,
        "regime": regime,
        "T": T,
        "width": net.width,
        "distinct_directions": int(np.unique(S, axis=0).shape[0]),
        "sup_error": err,
        "sup_error_mode": mode,
        "rnorm_upper": mass_per / q,
        "l1_mass": net.l1_mass,
        "checks": {
            "target_met": err <= eps,
            "cap_hit": cap_hit,
            "width_within_k_t3": net.width <= kk * (t + 3),
            "sign_consistent": sign_ok,
        },
    }
    return net, report


@dataclass
class CapGroup:
    label: float
    index: np.ndarray
    w_hat: np.ndarray


def _group_sizes(n: int, lo: float, hi: float) -> list[int]:
    """Split ``n`` into near-equal integer parts inside ``[lo, hi]``."""
    top = math.floor(hi)
    if top < max(1, math.ceil(lo)):
        raise ValueError(f"no integer group size in [{lo:.3g}, {hi:.3g}]")
    g = math.ceil(n / top)
    sizes = [n // g + (1 if r < n % g else 0) for r in range(g)]
    if min(sizes) < lo - 1e-12:
        raise ValueError(f"{n} points cannot be split into groups of size in [{lo:.3g}, {hi:.3g}]")
    return sizes


def cap_construction(data: Any, c1: float, seed: int = 0, max_retries: int = 10,
                     sigma_min: float = 1e-8) -> tuple[TwoLayerNet, dict]:
    """Group-wise least-squares interpolant of a sampled parity dataset.

    Same-label indices are split at random into groups of size between
    ``c1 d / ln d`` and ``2 c1 d / ln d``. For each group with label ``z``,
    ``w_hat = A^+ (z 1)`` is the minimum-norm solution and the neuron is
    ``z * relu(2 z w_hat^T x - 1)``, stored with unit input weight as
    ``2|w_hat| z * relu(z (w_hat/|w_hat|)^T x - 1/(2|w_hat|))``.

    The report records per-group checks P1 (exact in-group fit), P2
    (``|w_hat| <= 2 sqrt(n_j/d)``), P3 (``|w_hat^T x_i| <= 4 |w_hat| sqrt(ln d)``
    out of group), the margin check (out-of-group ``|w_hat^T x_i| <= 1/2``,
    which together with P1 forces exact interpolation), the fit on the sample
    and ``rnorm = 2 sum |w_hat|``.
    """
    X, y = (data.points, data.labels) if not isinstance(data, tuple) else data
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +-1")
    if d < 2:
        raise ValueError("d must be at least 2")
    ld = math.log(d)
    lo, hi = c1 * d / ld, 2 * c1 * d / ld
    if lo < 1:
        raise ValueError("c1 d / ln d must be at least 1")
    idx_by_label = {z: np.flatnonzero(y == z) for z in (1.0, -1.0)}
    for z, idx in idx_by_label.items():
        if idx.size < lo:
            raise ValueError(f"label {z:+g} occurs fewer than c1 d / ln d times")
    sizes = {z: _group_sizes(idx.size, lo, hi) for z, idx in idx_by_label.items()}
    rng = np.random.default_rng(seed)

    groups: list[CapGroup] = []
    for attempt in range(max_retries + 1):
        groups, ok = [], True
        for z in (1.0, -1.0):
            perm = rng.permutation(idx_by_label[z])
            start = 0
            for s in sizes[z]:
                part = np.sort(perm[start:start + s])
                start += s
                A = X[part]
                w_hat, _, rank, sv = np.linalg.lstsq(A, np.full(s, z), rcond=None)
                if sv.size < s or sv[-1] <= sigma_min:
                    ok = False
                    break
                groups.append(CapGroup(z, part, w_hat))
            if not ok:
                break
        if ok:
            break
    else:
        raise np.linalg.LinAlgError("rank-deficient group after all retries")

    m = len(groups)
    norms = np.array([np.linalg.norm(g.w_hat) for g in groups])
    Wn = np.array([g.label * g.w_hat / nr for g, nr in zip(groups, norms)])
    zs = np.array([g.label for g in groups])
    net = TwoLayerNet(d, 2.0 * norms * zs, Wn, -1.0 / (2.0 * norms))

    H = X @ np.array([g.w_hat for g in groups]).T  # (n, m)
    member = np.zeros((n, m), dtype=bool)
    for j, g in enumerate(groups):
        member[g.index, j] = True
    p1 = max(float(np.max(np.abs(H[g.index, j] - g.label))) for j, g in enumerate(groups))
    p2 = bool(np.all(norms <= 2 * np.sqrt(np.array([g.index.size for g in groups]) / d) + 1e-12))
    out = np.where(member, 0.0, np.abs(H))
    p3 = bool(np.all(out <= 4 * norms[None, :] * math.sqrt(ld)))
    margin = float(np.max(out)) if n > 1 else 0.0
    fit = float(np.max(np.abs(net(X) - y))) if n else 0.0
    rn = 2.0 * float(np.sum(norms))
    report = {
        "construction": "cap_construction",
        "params": {"d": d, "n": n, "c1": c1, "group_size_range": [lo, hi]},
        "seed": seed,
        "q": None,
        "k": m,
        "groups": m,
        "group_sizes": sorted({int(g.index.size) for g in groups}),
        "attempts": attempt + 1,
        "sup_error": fit,
        "rnorm_upper": rn,
        "rnorm": rnorm(net),
        "rnorm_bound_groups": 4 * math.sqrt(m * n / d),
        "max_out_of_group": margin,
        "checks": {
            "P1": p1 <= 1e-6,
            "P2": p2,
            "P3": p3,
            "margin": margin <= 0.5,
            "interpolates": fit <= 1e-6,
            "rnorm_within_group_bound": rn <= 4 * math.sqrt(m * n / d) + 1e-9,
        },
    }
    return net, report


def periodic_perturbations(target: PeriodicRidgeTarget, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` rows with ``w_i = -2 sign(v_i)`` w.p. ``|v_i|/(2 rho)``, else 0.

    Rows with ``v + rho w = 0`` are redrawn.
    """
    v, rho = target.v, target.rho
    p = np.abs(v) / (2 * rho)
    flip = -2.0 * np.sign(v)
    W = np.where(rng.random((k, v.size)) < p, flip, 0.0)
    while True:
        bad = np.linalg.norm(v + rho * W, axis=1) == 0
        if not np.any(bad):
            return W
        W[bad] = np.where(rng.random((int(bad.sum()), v.size)) < p, flip, 0.0)


def periodic_blades(target: PeriodicRidgeTarget, W: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Untruncated ``h_w(x) = phi(v^T x + rho w^T x)`` for rows of ``W`` (shape (k, n))."""
    Z = (target.v[None, :] + target.rho * np.atleast_2d(W)) @ np.atleast_2d(X).T
    return np.asarray(target.phi(Z), dtype=np.float64)


def periodic_k_start(d: int, eps: float) -> int:
    """Smallest integer ``k > 9 (d + 1) ln 2 / eps``."""
    return math.floor(9 * (d + 1) * math.log(2) / eps) + 1


def _periodic_net(target: PeriodicRidgeTarget, W: np.ndarray, tau: float, delta: float):
    d = target.d
    sd = math.sqrt(d)
    nets, clipped = [], 0
    for w in W:
        vec = target.v + target.rho * w
        nrm = float(np.linalg.norm(vec))
        t = tau / nrm
        clipped += t >= sd
        prof = truncation_profile(lambda z, s=nrm: target.phi(s * z), target.L * nrm, t, delta,
                                  limit=sd)
        nets.append(pwl_to_net(RidgeFn(prof, vec / nrm)))
    return TwoLayerNet.concatenate(nets, np.full(len(nets), 1.0 / len(nets))), clipped


def periodic_average(target: PeriodicRidgeTarget, eps: float, k: int | str = AUTO, seed: int = 0,
                     perturbations: np.ndarray | None = None,
                     max_atoms: int = MAX_ATOMS) -> tuple[TwoLayerNet, dict]:
    """Average of truncated ridge approximants along randomly perturbed directions.

    Each blade ``h_w(x) = phi(v^T x + rho w^T x)`` agrees with the target on
    the cube because ``w^T x`` is an integer; it is a ridge function in
    direction ``u = (v + rho w)/|v + rho w|`` with profile
    ``z -> phi(|v + rho w| z)``, truncated to the band
    ``|u^T x| <= tau / |v + rho w|`` at accuracy ``eps/3``, with
    ``tau = sigma sqrt(2 ln(6/eps)) + 2 rho ln(6/eps)/3`` and
    ``sigma = sqrt(2 rho |v|_1 - 1)``. Bands reaching past the domain are capped
    at ``sqrt(d)``.

    Parameters
    ----------
    target : PeriodicRidgeTarget
    eps : float
        Target accuracy in ``(0, 1)``.
    k : int or "auto"
        Number of blades; ``"auto"`` starts at ``floor(9 (d+1) ln2 / eps) + 1``
        and doubles until the sup error over the cube is at most ``eps`` or the
        width would pass ``max_atoms``.
    perturbations : ndarray, optional
        Explicit integer perturbation rows, bypassing sampling (``k`` ignored).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    d = target.d
    sigma = target.sigma
    lg = math.log(6 / eps)
    tau = sigma * math.sqrt(2 * lg) + 2 * target.rho * lg / 3
    delta = eps / 3
    rng = np.random.default_rng(seed)
    k0 = periodic_k_start(d, eps)
    auto = perturbations is None and k == AUTO
    if perturbations is not None:
        W = np.atleast_2d(np.asarray(perturbations, dtype=np.float64))
        if np.any(np.linalg.norm(target.v + target.rho * W, axis=1) == 0):
            raise ValueError("perturbation row makes v + rho w vanish")
    else:
        W = periodic_perturbations(target, k0 if auto else int(k), rng)
    net, clipped = _periodic_net(target, W, tau, delta)
    err, mode = sup_error_on_cube(net, target, seed)
    cap_hit = False
    while auto and err > eps:
        if 2 * net.width > max_atoms:
            cap_hit = True
            break
        W = np.vstack([W, periodic_perturbations(target, W.shape[0], rng)])
        net, clipped = _periodic_net(target, W, tau, delta)
        err, mode = sup_error_on_cube(net, target, seed)
    norms = np.linalg.norm(target.v + target.rho * W, axis=1)
    report = {
        "construction": "periodic_average",
        "params": {"d": d, "rho": target.rho, "L": target.L, "eps": eps,
                   "k": AUTO if auto else int(W.shape[0])},
        "seed": seed,
        "q": None,
        "k": int(W.shape[0]),
        "k_start": k0,
        "sigma": sigma,
        "tau": tau,
        "delta": delta,
        "width": net.width,
        "bands_capped": int(clipped),
        "max_direction_norm": float(np.max(norms)),
        "direction_norm_bound": sigma + math.sqrt(2 * math.log(2 * W.shape[0])),
        "sup_error": err,
        "sup_error_mode": mode,
        "rnorm_upper": net.l1_mass,
        "checks": {"target_met": err <= eps, "cap_hit": cap_hit},
    }
    return net, report
