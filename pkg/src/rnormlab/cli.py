"""Command line entry point ``rnormlab``.

Numerical modules are imported after the arguments are parsed so that
``--threads`` can set the BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "BLIS_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    def common(defaults: bool) -> argparse.ArgumentParser:
        # global flags are accepted before or after the subcommand
        g = argparse.ArgumentParser(add_help=False)
        kw = (lambda v: {"default": v}) if defaults else (lambda v: {"default": argparse.SUPPRESS})
        g.add_argument("--seed", type=int, help="base random seed (default 0)", **kw(0))
        g.add_argument("--out", help="output path (default stdout)", **kw(None))
        g.add_argument("--config", help="JSON file with subcommand configuration", **kw(None))
        g.add_argument("--threads", type=int, help="BLAS/OpenMP thread count", **kw(None))
        return g

    p = argparse.ArgumentParser(prog="rnormlab", description="Norm-minimal ReLU interpolation tools.",
                                parents=[common(True)])
    sub = p.add_subparsers(dest="command", required=True)
    shared = [common(False)]

    c = sub.add_parser("construct", parents=shared, help="build a network from a construction")
    c.add_argument("kind", choices=["full-average", "random-average", "cap", "periodic", "sawtooth"])
    c.add_argument("--d", type=int)
    c.add_argument("--t", type=int, default=0)
    c.add_argument("--eps", type=float, default=0.25)
    c.add_argument("--k", default="auto", help="number of atoms or 'auto'")
    c.add_argument("--data", help="dataset CSV (cap)")
    c.add_argument("--c1", type=float, help="group-size constant (cap)")
    c.add_argument("--q", type=float, default=2.0, help="cosine period parameter (periodic)")
    c.add_argument("--w", type=_floats, help="comma-separated sign direction (sawtooth)")

    r = sub.add_parser("rnorm", parents=shared, help="R-norm and V2 upper bound of a network JSON")
    r.add_argument("net")

    rv = sub.add_parser("ridge-vp", parents=shared, help="minimal ridge fit along one direction or a pool")
    rv.add_argument("data")
    rv.add_argument("--eps", type=float, default=0.0)
    rv.add_argument("--direction", type=_floats,
                    help="comma-separated direction (normalized); omit to search a pool")

    sv = sub.add_parser("solve-vp", parents=shared, help="dictionary LP for (tube) interpolation")
    sv.add_argument("data")
    sv.add_argument("--dictionary", help="dictionary spec JSON file (or use --config)")
    sv.add_argument("--eps", type=float, default=0.0)
    sv.add_argument("--inject", help="network JSON whose atoms join the dictionary")
    sv.add_argument("--no-affine", action="store_true", help="disable the free affine part")

    co = sub.add_parser("correlate", parents=shared, help="exact neuron-parity correlations")
    co.add_argument("--d", type=int, required=True)
    co.add_argument("--w", type=_floats, help="comma-separated weights of a single neuron")
    co.add_argument("--b", type=float, default=0.0)
    co.add_argument("--samples", type=int, default=10_000)

    e = sub.add_parser("experiment", parents=shared, help="run a seeded sweep and write CSV")
    e.add_argument("name")
    e.add_argument("--no-wall-time", action="store_true", help="leave wall_time_ms empty")

    ds = sub.add_parser("dataset", parents=shared, help="write a dataset CSV")
    ds.add_argument("kind", choices=["full-parity", "sampled-parity", "cosine"])
    ds.add_argument("--d", type=int, required=True)
    ds.add_argument("--n", type=int, default=100)
    ds.add_argument("--S", type=_ints, help="0-based coordinates of the parity (default all)")
    ds.add_argument("--q", type=float, default=1.0)
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, default=_jsonable))


def _jsonable(x: Any):
    import numpy as np

    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _read_dataset(path: str):
    from .harness.datasets import Dataset

    with open(path) as fh:
        return Dataset.from_csv(fh.read())


def _cmd_construct(args, cfg) -> int:
    from . import constructions as C
    from .nets import serialize

    k = args.k if args.k == "auto" else int(args.k)
    if args.kind == "full-average":
        net = C.parity_full_average(args.d)
        report = {"construction": "parity_full_average", "d": args.d, "rnorm_upper": net.l1_mass}
    elif args.kind == "random-average":
        net, report = C.parity_random_average(args.d, args.t, args.eps, k, seed=args.seed)
    elif args.kind == "cap":
        data = _read_dataset(args.data)
        net, report = C.cap_construction(data, args.c1, seed=args.seed)
    elif args.kind == "periodic":
        from .harness.experiments import cosine_profile_target

        net, report = C.periodic_average(cosine_profile_target(args.d, args.q), args.eps, k,
                                         seed=args.seed)
    else:
        from .ridge import sawtooth

        _, net = sawtooth(args.w, args.t)
        report = {"construction": "sawtooth", "t": args.t, "rnorm_upper": net.l1_mass}
    _emit(serialize(net) + "\n", args.out)
    # the report goes to stdout unless stdout already carries the network
    print(json.dumps(report, sort_keys=True, default=_jsonable),
          file=sys.stdout if args.out else sys.stderr)
    return 0


def _cmd_rnorm(args, cfg) -> int:
    from .nets import deserialize, rnorm_details, v2norm_upper

    with open(args.net) as fh:
        net = deserialize(fh.read())
    out = {"width": net.width, "l1_mass": net.l1_mass}
    if net.regime == "R":
        val, exact = rnorm_details(net)
        out.update(rnorm=val, exact=exact, v2_mass=v2norm_upper(net)[0])
    else:
        out.update(v2_mass=net.l1_mass)
    _summary(out)
    return 0


def _cmd_ridge_vp(args, cfg) -> int:
    from .ridge import pwl_to_net, search_ridge_vp, solve_ridge_vp
    from .nets import serialize

    data = _read_dataset(args.data)
    if args.direction is not None:
        import numpy as np

        u = np.asarray(args.direction, dtype=np.float64)
        if u.size != data.d or not np.linalg.norm(u) > 0:
            raise ValueError("--direction must be a nonzero vector with d entries")
        res = solve_ridge_vp(data, u / np.linalg.norm(u), args.eps)
        ridge, value, extra = res.ridge, res.value, {"exact": res.exact}
    else:
        res = search_ridge_vp(data, args.eps, cfg or None, args.seed)
        feasible = sum(r["feasible"] for r in res.table)
        ridge, value, extra = res.best, res.value, {"directions": len(res.table), "feasible": feasible}
    if args.out:
        _emit(serialize(pwl_to_net(ridge)) + "\n", args.out)
    _summary({"value": value, **extra})
    return 0


def _cmd_solve_vp(args, cfg) -> int:
    from .nets import deserialize, serialize
    from .varsolve import VPInstance, build_dictionary, solve_vp

    data = _read_dataset(args.data)
    spec = _load_config(args.dictionary) if args.dictionary else dict(cfg)
    if args.inject:
        with open(args.inject) as fh:
            spec["inject"] = deserialize(fh.read())
    dic = build_dictionary(data, spec, seed=args.seed)
    sol = solve_vp(VPInstance(data, args.eps, dic, affine_free=not args.no_affine))
    if args.out:
        _emit(serialize(sol.net) + "\n", args.out)
    _summary({"objective": sol.objective, "status": sol.status,
              "support_size": sol.support_size, "residual": sol.residual})
    return 0 if sol.status == "optimal" else 2


def _cmd_correlate(args, cfg) -> int:
    import numpy as np

    from .harness.metrics import neuron_parity_correlation, neuron_parity_correlations, sample_neurons

    if args.w is not None:
        if len(args.w) != args.d:
            raise ValueError("--w must have d entries")
        _summary({"d": args.d, "correlation": neuron_parity_correlation(args.w, args.b)})
        return 0
    W, b = sample_neurons(args.d, args.samples, args.seed)
    corr = np.abs(neuron_parity_correlations(W, b))
    _summary({"d": args.d, "samples": args.samples, "max_abs_correlation": float(corr.max()),
              "bound": 8.0 / args.d, "violations": int(np.sum(corr > 8.0 / args.d))})
    return 0


def _cmd_experiment(args, cfg) -> int:
    from .harness.experiments import records_to_csv, run_experiment

    rows = run_experiment(args.name, cfg, args.seed)
    _emit(records_to_csv(rows, wall_time=not args.no_wall_time), args.out)
    return 0


def _cmd_dataset(args, cfg) -> int:
    from .harness import datasets as D

    if args.kind == "full-parity":
        data = D.gen_full_parity(args.d, args.S)
    elif args.kind == "sampled-parity":
        data = D.gen_sampled_parity(args.d, args.n, args.S, args.seed)
    else:
        data = D.gen_cosine_dataset(args.d, args.q)
    _emit(data.to_csv(), args.out)
    return 0


_COMMANDS = {
    "construct": _cmd_construct,
    "rnorm": _cmd_rnorm,
    "ridge-vp": _cmd_ridge_vp,
    "solve-vp": _cmd_solve_vp,
    "correlate": _cmd_correlate,
    "experiment": _cmd_experiment,
    "dataset": _cmd_dataset,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except (ValueError, OSError) as exc:
        print(f"rnormlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
