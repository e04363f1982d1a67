"""Command line entry point: ``spinsqueeze {trace,scaling,noise,husimi,verify}``.

Exit codes: 0 success, 2 invalid configuration, 3 budget refusal, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import BudgetExceededError, InvalidArgumentError, SpinSqueezeError
from .experiments import (
    SCHEMES,
    ExperimentConfig,
    run_husimi,
    run_noise_mc,
    run_scaling,
    run_trace,
)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERICAL = 0, 2, 3, 4

_FLAG_FIELDS = {
    "scheme": str, "n_s": int, "n_j": int, "g_x": float, "g_y": float, "g_z": float,
    "anisotropy": float, "horizon": float, "horizon_factor": float, "samples": int, "dt": float,
    "theta": float, "phi": float, "boson_cutoff": int, "sigma_area": float, "sigma_sep": float,
    "seed": int, "krylov_dim": int, "step_tol": float, "eig_threshold": int, "checkpoint_every": int,
    "refine_rel_tol": float, "out_dir": str, "tag": str,
}


def _window(value: str):
    if value in ("auto", "full"):
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--j-window takes 'auto', 'full' or an integer") from None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig defaults (flags override)")
    p.add_argument("--profile", help="full-scale parameter set: fig1, fig3, fig4, fig5 (long-running)")
    p.add_argument("--scheme", choices=SCHEMES)
    for name, typ in _FLAG_FIELDS.items():
        if name == "scheme":
            continue
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("--j-window", dest="j_window", type=_window)
    p.add_argument("--memory-budget-gib", type=float)
    p.add_argument("--workers", type=int, help="process pool size (default: $SPINSQUEEZE_THREADS or 1)")


def _config(args) -> ExperimentConfig:
    base: dict = {}
    if args.profile:
        base.update(ExperimentConfig.profile(args.profile).to_dict())
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))
    for name in list(_FLAG_FIELDS) + ["j_window"]:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    if args.memory_budget_gib is not None:
        base["memory_budget"] = int(args.memory_budget_gib * 2**30)
    return ExperimentConfig.from_dict(base)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinsqueeze", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="simulate one scheme and report optimal squeezing")
    _add_config_flags(p)

    p = sub.add_parser("scaling", help="optimal squeezing across system sizes")
    _add_config_flags(p)
    p.add_argument("--sweep", choices=("n_s", "ratio"), default="n_s")
    p.add_argument("--values", type=_floats, required=True, help="comma separated sweep values")
    p.add_argument("--min-points", type=int, default=4)

    p = sub.add_parser("noise", help="Gaussian pulse-noise Monte Carlo")
    _add_config_flags(p)
    p.add_argument("--grid", action="append", type=_floats,
                   help="'sigma_area,sigma_sep' cell; repeatable (default: 1e-4/5e-4 on each)")
    p.add_argument("--trajectories", type=int, default=20)

    p = sub.add_parser("husimi", help="Husimi Q snapshots of the S ensemble")
    _add_config_flags(p)
    p.add_argument("--times", type=_floats, help="snapshot times (default: t_min * 0, 1/4, 1/2, 3/4, 1)")
    p.add_argument("--n-theta", type=int, default=64)
    p.add_argument("--n-phi", type=int, default=128)

    p = sub.add_parser("verify", help="run the quick invariant suite")
    p.add_argument("--quick", action="store_true", help="skip the slower checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            from .verify import run_checks

            results = run_checks(quick=args.quick)
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
            return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL
        cfg = _config(args)
        if args.command == "trace":
            _, summary = run_trace(cfg)
            out = {k: summary[k] for k in ("scheme", "t_min", "xi2_min", "bracketed", "predicted_t_min",
                                           "predicted_xi2_min", "horizon", "extensions")}
        elif args.command == "scaling":
            res = run_scaling(cfg, args.sweep, args.values, args.min_points, args.workers)
            out = {k: res.get(k) for k in ("sweep", "points", "fit_xi2", "fit_t", "fit_error") if k in res}
        elif args.command == "noise":
            grid = args.grid or [[1e-4, 0.0], [5e-4, 0.0], [0.0, 1e-4], [0.0, 5e-4]]
            if any(len(g) != 2 for g in grid):
                raise InvalidArgumentError("--grid cells take exactly two numbers")
            res = run_noise_mc(cfg, grid, args.trajectories, args.workers)
            out = {"nominal_xi2_min": res["nominal"]["xi2_min"],
                   "cells": [{k: c[k] for k in ("sigma_area", "sigma_sep", "xi2_min_mean", "xi2_min_std")}
                             for c in res["cells"]]}
        else:
            recs = run_husimi(cfg, args.times, args.n_theta, args.n_phi)
            out = [{k: r[k] for k in ("t", "integral", "width_ratio_q", "width_ratio_state", "mean_direction")}
                   for r in recs]
        print(json.dumps(out, indent=2, default=float))
        return EXIT_OK
    except BudgetExceededError as e:
        print(f"budget refusal: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (InvalidArgumentError, TypeError, OSError, json.JSONDecodeError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SpinSqueezeError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
