"""Seeded experiment sweeps emitting one CSV row per cell.

Every experiment maps its measurements onto the fixed column set
``experiment,d,n,t,eps,rho,seed,method,rnorm_upper,lp_objective,lower_bound,
sup_error,l2_error,mse_clip,wall_time_ms``; a column that does not apply is
left empty. Column use per experiment:

scaling
    ``full_average`` (``rnorm_upper``, ``sup_error``), ``random_average``
    (``rnorm_upper``, ``sup_error``), ``ridge_search`` (best ridge
    interpolant value in ``rnorm_upper``, smallest per-direction certificate
    in ``lower_bound``; one pair per ``ridge_eps``; the best value is the
    smallest over the pool), ``ridge_certificate_max`` (``lower_bound``) and
    ``lp`` (``lp_objective``, analytic ``lower_bound``, errors).
generalization
    ``lp_interpolant``: ``lp_objective`` and the cube metrics ``sup_error``,
    ``l2_error`` (unclipped) and ``mse_clip``; ``lp_failed`` when the LP
    does not solve.
correlation
    ``neuron_correlation``: ``n`` sampled neurons, largest ``|<r, chi>|`` in
    ``sup_error`` and the ``8/d`` bound in ``rnorm_upper``.
v2check
    ``v2_conversion``: ``lower_bound`` = R-norm, ``rnorm_upper`` = V2 mass,
    ``lp_objective`` = ``12 R + 18 K``, ``sup_error`` = pointwise mismatch of
    the converted network, ``l2_error`` = the estimate ``K``.
periodic
    ``periodic_average`` (``rnorm_upper`` = sum |a|, ``sup_error``) and
    ``ridge_search`` at ``eps = 1/2`` (``rnorm_upper`` = best ridge value).
cap
    ``cap_construction``: ``rnorm_upper`` = R-norm, ``lower_bound`` = the
    group bound ``4 sqrt(m n / d)``, ``sup_error`` = fit on the sample.
oracle1d
    ``lp_vs_secant``: ``lp_objective`` and the secant formula in
    ``lower_bound``, ``sup_error`` = LP residual.

Cells run sequentially in a fixed order; each draws from its own seed.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, fields
from typing import Any, Callable

import numpy as np

from ..constructions import (
    AUTO,
    ParityTarget,
    PeriodicRidgeTarget,
    cap_construction,
    parity_full_average,
    parity_random_average,
    periodic_average,
)
from ..cube import cube
from ..nets import TwoLayerNet, rnorm, v2norm_upper
from ..ridge import search_ridge_vp
from ..varsolve import VPInstance, build_dictionary, parity_lower_bound, solve_vp
from .datasets import Dataset, gen_full_parity, gen_sampled_parity
from .metrics import l2_error, mse_clip, neuron_parity_correlations, sample_neurons, sup_error

CSV_HEADER = ("experiment", "d", "n", "t", "eps", "rho", "seed", "method", "rnorm_upper",
              "lp_objective", "lower_bound", "sup_error", "l2_error", "mse_clip", "wall_time_ms")


@dataclass
class ExperimentRecord:
    experiment: str
    d: int
    n: int | None = None
    t: int | None = None
    eps: float | None = None
    rho: float | None = None
    seed: int | None = None
    method: str = ""
    rnorm_upper: float | None = None
    lp_objective: float | None = None
    lower_bound: float | None = None
    sup_error: float | None = None
    l2_error: float | None = None
    mse_clip: float | None = None
    wall_time_ms: float | None = None

    def __post_init__(self) -> None:
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, float) and not math.isfinite(val):
                # non-finite numbers are recorded as absent
                setattr(self, f.name, None)

    def row(self, wall_time: bool = True) -> list[str]:
        out = []
        for name in CSV_HEADER:
            val = getattr(self, name)
            if name == "wall_time_ms" and not wall_time:
                val = None
            if val is None:
                out.append("")
            elif isinstance(val, float):
                out.append(repr(val))
            else:
                out.append(str(val))
        return out


def records_to_csv(records: list[ExperimentRecord], wall_time: bool = True) -> str:
    """CSV text with the fixed header; ``wall_time=False`` blanks the timing column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row(wall_time))
    return buf.getvalue()


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = 1000.0 * (time.perf_counter() - self.t0)


# config schemas: key -> (default, validator)
def _int_list(x):
    return isinstance(x, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_bool(x):
    return isinstance(x, bool)


def _is_dict(x):
    return isinstance(x, dict)


def _positive_int(x):
    return _is_int(x) and x > 0


SCHEMAS: dict[str, dict[str, tuple[Any, Callable[[Any], bool]]]] = {
    "scaling": {
        "d": ([4, 6, 8, 10, 12], _int_list),
        "t": (0, _is_int),
        "eps": (0.25, _is_num),
        "random_seeds": (1, _positive_int),
        "random_average": (True, _is_bool),
        "ridge": (True, _is_bool),
        "ridge_max_d": (12, _is_int),
        "ridge_eps": ([0.0], lambda x: isinstance(x, list) and all(_is_num(v) for v in x)),
        "lp": (True, _is_bool),
        "lp_max_d": (10, _is_int),
    },
    "generalization": {
        "d": (10, _positive_int),
        "n": ([30, 100, 300, 700, 1000], _int_list),
        "seeds": (9, _positive_int),
        "dictionary": ({"differences": "all", "random": 200, "biases": "data"}, _is_dict),
        "full_cube": (False, _is_bool),
    },
    "correlation": {
        "d": ([8, 10, 12], _int_list),
        "samples": (10_000, _positive_int),
    },
    "v2check": {
        "d": ([4, 8], _int_list),
        "nets": (100, _positive_int),
        "max_width": (50, _positive_int),
        "k_samples": (10_000, _positive_int),
        "match_samples": (1_000, _positive_int),
    },
    "periodic": {
        "d": (16, _positive_int),
        "q": (2.0, _is_num),
        "eps": (0.3, _is_num),
        "seeds": (5, _positive_int),
        "ridge": (True, _is_bool),
        "ridge_pool": ({"hypercube": False, "differences": 0, "random": 4}, _is_dict),
    },
    "cap": {
        "d": (128, _positive_int),
        "n": (1024, _positive_int),
        "c1": (math.log(128) / 128, _is_num),
        "seeds": (40, _positive_int),
    },
    "oracle1d": {
        "instances": (100, _positive_int),
        "max_points": (8, _positive_int),
    },
}
EXPERIMENTS = tuple(SCHEMAS)


def validate_config(name: str, config: dict | None) -> dict:
    """Fill defaults and check types; unknown keys or bad values raise ``ValueError``."""
    if name not in SCHEMAS:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    config = dict(config or {})
    schema = SCHEMAS[name]
    extra = set(config) - set(schema)
    if extra:
        raise ValueError(f"unknown config keys for {name}: {sorted(extra)}")
    out = {}
    for key, (default, ok) in schema.items():
        val = config.get(key, default)
        if not ok(val):
            raise ValueError(f"invalid value for {name}.{key}: {val!r}")
        out[key] = val
    return out


def run_experiment(name: str, config: dict | None = None, seed: int = 0) -> list[ExperimentRecord]:
    """Run one experiment sweep and return its records in a fixed order.

    ``seed`` is the base seed; cell ``i`` of a multi-seed sweep uses ``seed + i``.
    """
    cfg = validate_config(name, config)
    return _RUNNERS[name](cfg, int(seed))


def _lp_row(exp: str, d: int, data: Dataset, dictionary, target, seed, method="lp", **extra):
    with _Timer() as tm:
        sol = solve_vp(VPInstance(data, 0.0, dictionary))
    if sol.status != "optimal":
        return ExperimentRecord(exp, d, data.n, seed=seed, eps=0.0, method=f"{method}_failed",
                                wall_time_ms=tm.ms, **extra), sol
    l2 = l2_error(sol.net, target)
    lb = parity_lower_bound(d, l2) if l2 < 1 else None
    return ExperimentRecord(
        exp, d, data.n, seed=seed, eps=0.0, method=method, lp_objective=sol.objective,
        lower_bound=lb.value if lb is not None and lb.valid else None,
        sup_error=sup_error(sol.net, target), l2_error=l2, mse_clip=mse_clip(sol.net, target),
        wall_time_ms=tm.ms, **extra), sol


def _run_scaling(cfg: dict, seed: int) -> list[ExperimentRecord]:
    rows = []
    for d in cfg["d"]:
        if d % 2 or d < 2:
            raise ValueError("scaling needs even d")
        target = ParityTarget(d)
        with _Timer() as tm:
            g = parity_full_average(d)
            rn = rnorm(g)
        rows.append(ExperimentRecord("scaling", d, 2**d, t=0, method="full_average",
                                     rnorm_upper=rn, sup_error=sup_error(g, target),
                                     wall_time_ms=tm.ms))
        if cfg["random_average"]:
            t, eps = cfg["t"], float(cfg["eps"])
            for i in range(cfg["random_seeds"]):
                with _Timer() as tm:
                    _, rep = parity_random_average(d, t, eps, AUTO, seed=seed + i)
                rows.append(ExperimentRecord("scaling", d, 2**d, t=t, eps=eps, seed=seed + i,
                                             method="random_average",
                                             rnorm_upper=rep["rnorm_upper"],
                                             sup_error=rep["sup_error"], wall_time_ms=tm.ms))
        data = gen_full_parity(d)
        if cfg["ridge"] and d <= cfg["ridge_max_d"]:
            pool = {"hypercube": True, "differences": 0, "random": 0}
            for eps in cfg["ridge_eps"]:
                eps = float(eps)
                with _Timer() as tm:
                    res = search_ridge_vp(data, eps, pool, seed)
                certs = [r["certificate_bound"] for r in res.table]
                rows.append(ExperimentRecord("scaling", d, data.n, eps=eps, seed=seed,
                                             method="ridge_search", rnorm_upper=res.value,
                                             lower_bound=min(certs), wall_time_ms=tm.ms))
                rows.append(ExperimentRecord("scaling", d, data.n, eps=eps, seed=seed,
                                             method="ridge_certificate_max", lower_bound=max(certs)))
        if cfg["lp"] and d <= cfg["lp_max_d"]:
            dic = build_dictionary(data, {"inject": g})
            row, _ = _lp_row("scaling", d, data, dic, target, seed)
            rows.append(row)
    return rows


def _run_generalization(cfg: dict, seed: int) -> list[ExperimentRecord]:
    d = cfg["d"]
    target = ParityTarget(d)
    rows = []
    sizes = [2**d] if cfg["full_cube"] else cfg["n"]
    for n in sizes:
        for i in range(cfg["seeds"]):
            s = seed + i
            data = gen_full_parity(d) if cfg["full_cube"] else gen_sampled_parity(d, n, None, s)
            with _Timer() as tm:
                dic = build_dictionary(data, cfg["dictionary"], seed=s)
                sol = solve_vp(VPInstance(data, 0.0, dic))
            if sol.status != "optimal":
                rows.append(ExperimentRecord("generalization", d, n, eps=0.0, seed=s,
                                             method="lp_failed", wall_time_ms=tm.ms))
                continue
            rows.append(ExperimentRecord(
                "generalization", d, n, eps=0.0, seed=s, method="lp_interpolant",
                lp_objective=sol.objective, sup_error=sup_error(sol.net, target),
                l2_error=l2_error(sol.net, target), mse_clip=mse_clip(sol.net, target),
                wall_time_ms=tm.ms))
    return rows


def _run_correlation(cfg: dict, seed: int) -> list[ExperimentRecord]:
    rows = []
    for d in cfg["d"]:
        with _Timer() as tm:
            W, b = sample_neurons(d, cfg["samples"], seed)
            corr = neuron_parity_correlations(W, b)
        rows.append(ExperimentRecord("correlation", d, cfg["samples"], seed=seed,
                                     method="neuron_correlation", rnorm_upper=8.0 / d,
                                     sup_error=float(np.max(np.abs(corr))), wall_time_ms=tm.ms))
    return rows


def random_net(d: int, width: int, rng: np.random.Generator) -> TwoLayerNet:
    """Random R-regime network with unit directions, biases in ``[-sqrt d, sqrt d]`` and an affine part."""
    W = rng.standard_normal((width, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    b = rng.uniform(-math.sqrt(d), math.sqrt(d), width)
    a = rng.standard_normal(width)
    return TwoLayerNet(d, a, W, b, rng.standard_normal(d) * rng.random(), float(rng.standard_normal()))


def unit_ball_sup(net: TwoLayerNet, samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of ``sup_{|x| <= 1} |g(x)|`` from sphere and interior samples."""
    d = net.d
    G = rng.standard_normal((samples, d))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    G[samples // 2:] *= rng.random(samples - samples // 2)[:, None] ** (1.0 / d)
    return float(np.max(np.abs(net(G))))


def _run_v2check(cfg: dict, seed: int) -> list[ExperimentRecord]:
    rows = []
    ds = cfg["d"]
    for i in range(cfg["nets"]):
        s = seed + i
        d = ds[i % len(ds)]
        rng = np.random.default_rng(s)
        with _Timer() as tm:
            net = random_net(d, int(rng.integers(1, cfg["max_width"] + 1)), rng)
            K = unit_ball_sup(net, cfg["k_samples"], rng)
            R = rnorm(net)
            mass, v2 = v2norm_upper(net)
            X = rng.standard_normal((cfg["match_samples"], d))
            X *= (math.sqrt(d) * rng.random(X.shape[0]) ** (1.0 / d)
                  / np.linalg.norm(X, axis=1))[:, None]
            mismatch = float(np.max(np.abs(net(X) - v2(X))))
        rows.append(ExperimentRecord("v2check", d, net.width, seed=s, method="v2_conversion",
                                     rnorm_upper=mass, lp_objective=12 * R + 18 * K,
                                     lower_bound=R, sup_error=mismatch, l2_error=K,
                                     wall_time_ms=tm.ms))
    return rows


def cosine_profile_target(d: int, q: float) -> PeriodicRidgeTarget:
    """Cosine ridge target ``phi(z) = cos(2 pi z / rho)`` along ``v = 1/sqrt(d)``.

    With ``rho = 4q/sqrt(d)`` this is ``cos(2 pi 1^T x / (rho sqrt d))``, the
    label of :func:`gen_cosine_dataset`.
    """
    rho = 4.0 * q / math.sqrt(d)
    v = np.full(d, 1.0 / math.sqrt(d))
    return PeriodicRidgeTarget(v, rho, lambda z: np.cos(2 * math.pi * np.asarray(z) / rho),
                               2 * math.pi / rho)


def _run_periodic(cfg: dict, seed: int) -> list[ExperimentRecord]:
    import warnings

    d, q, eps = cfg["d"], float(cfg["q"]), float(cfg["eps"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        target = cosine_profile_target(d, q)
    rows = []
    for i in range(cfg["seeds"]):
        s = seed + i
        with _Timer() as tm:
            net, rep = periodic_average(target, eps, AUTO, seed=s)
        rows.append(ExperimentRecord("periodic", d, 2**d, eps=eps, rho=target.rho, seed=s,
                                     method="periodic_average", rnorm_upper=rep["rnorm_upper"],
                                     sup_error=rep["sup_error"], wall_time_ms=tm.ms))
    if cfg["ridge"]:
        X = cube(d)
        data = Dataset(d, X, target(X), {"kind": "cosine", "q": q})
        pool = dict(cfg["ridge_pool"])
        pool.setdefault("directions", [target.v.tolist()])
        with _Timer() as tm:
            res = search_ridge_vp(data, 0.5, pool, seed)
        rows.append(ExperimentRecord("periodic", d, data.n, eps=0.5, rho=target.rho, seed=seed,
                                     method="ridge_search", rnorm_upper=res.value,
                                     wall_time_ms=tm.ms))
    return rows


def _run_cap(cfg: dict, seed: int) -> list[ExperimentRecord]:
    d, n, c1 = cfg["d"], cfg["n"], float(cfg["c1"])
    rows = []
    for i in range(cfg["seeds"]):
        s = seed + i
        data = gen_sampled_parity(d, n, None, s)
        with _Timer() as tm:
            _, rep = cap_construction(data, c1, seed=s)
        rows.append(ExperimentRecord("cap", d, n, seed=s, method="cap_construction",
                                     rnorm_upper=rep["rnorm"],
                                     lower_bound=rep["rnorm_bound_groups"],
                                     sup_error=rep["sup_error"], wall_time_ms=tm.ms))
    return rows


def secant_value(z: np.ndarray, y: np.ndarray) -> float:
    """``sum |s_{i+1} - s_i|`` over consecutive secant slopes of sorted 1D data."""
    o = np.argsort(z, kind="stable")
    z, y = z[o], y[o]
    s = np.diff(y) / np.diff(z)
    return float(np.sum(np.abs(np.diff(s))))


def random_1d_instance(rng: np.random.Generator, max_points: int) -> Dataset:
    """Distinct points in ``[-1, 1]`` (at least 0.05 apart) with labels in ``[-1, 1]``."""
    m = int(rng.integers(1, max_points + 1))
    while True:
        z = np.sort(rng.uniform(-1.0, 1.0, m))
        if m == 1 or np.min(np.diff(z)) >= 0.05:
            break
    return Dataset(1, z[:, None], rng.uniform(-1.0, 1.0, m), {"kind": "custom"})


def _run_oracle1d(cfg: dict, seed: int) -> list[ExperimentRecord]:
    rows = []
    rng = np.random.default_rng(seed)
    for i in range(cfg["instances"]):
        data = random_1d_instance(rng, cfg["max_points"])
        with _Timer() as tm:
            dic = build_dictionary(data, {"directions": [[1.0]], "biases": "data"})
            sol = solve_vp(VPInstance(data, 0.0, dic))
        rows.append(ExperimentRecord("oracle1d", 1, data.n, eps=0.0, seed=seed, method="lp_vs_secant",
                                     lp_objective=sol.objective,
                                     lower_bound=secant_value(data.points[:, 0], data.labels),
                                     sup_error=sol.residual, wall_time_ms=tm.ms))
    return rows


_RUNNERS = {
    "scaling": _run_scaling,
    "generalization": _run_generalization,
    "correlation": _run_correlation,
    "v2check": _run_v2check,
    "periodic": _run_periodic,
    "cap": _run_cap,
    "oracle1d": _run_oracle1d,
}
