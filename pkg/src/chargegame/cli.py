"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 infeasible scenario (degenerate
fleet, empty allocation set, unmatchable target), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (DegenerateFleetError, EmptyPolytopeError,
                     InfeasibleTargetError, PipelineStageError)
from .harness import ExperimentConfig, run_pipeline
from .scenario import demo_scenario, write_scenario

EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _add_common(p):
    p.add_argument("--config", help="scenario config JSON (omit to use the packaged demo)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chargegame",
        description="Pricing-game coordination of electric fleet charging",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the operating period, write the fleet snapshot")
    _add_common(p)

    p = sub.add_parser("solve-upper", help="solve the pricing game")
    _add_common(p)
    p.add_argument("--mechanism", default="rsg",
                   choices=["rsg", "fixed-price", "grid-search"])
    p.add_argument("--price", help="comma-separated fixed price vector")

    p = sub.add_parser("solve-lower", help="upper solve plus surge pricing")
    _add_common(p)

    p = sub.add_parser("baseline", help="fixed-price equilibrium")
    _add_common(p)
    p.add_argument("--price", help="comma-separated price vector (default 3,3,...)")

    p = sub.add_parser("grid-search", help="price grid search")
    _add_common(p)
    p.add_argument("--p-max", type=float, default=5.0)
    p.add_argument("--resolution", type=int, default=9)
    p.add_argument("--refine", type=int, default=1)

    p = sub.add_parser("robustness", help="noise sweep over demand estimates")
    _add_common(p)
    p.add_argument("--alphas", default="0,0.05,0.1,0.15,0.25,0.35")
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("pipeline", help="full chain with all artifacts")
    _add_common(p)
    p.add_argument("--robustness", action="store_true", dest="with_sweep")
    p.add_argument("--resolution", type=int, default=9)
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("make-demo", help="materialize the packaged demo scenario files")
    p.add_argument("--out", default="demo_scenario")
    p.add_argument("--seed", type=int, default=9)
    return parser


def _config_from_args(args, **overrides) -> ExperimentConfig:
    base = dict(
        scenario_path=args.config,
        out_dir=args.out,
        seed=args.seed,
        max_iter=args.max_iter,
        tol=args.tol,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _parse_price(text: str | None):
    if text is None:
        return None
    return np.array([float(v) for v in text.split(",")])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (DegenerateFleetError, EmptyPolytopeError, InfeasibleTargetError) as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PipelineStageError as exc:
        if isinstance(exc.cause, (DegenerateFleetError, EmptyPolytopeError,
                                  InfeasibleTargetError)):
            print(f"infeasible scenario: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dispatch(args) -> int:
    if args.command == "make-demo":
        path = write_scenario(demo_scenario(args.seed), args.out)
        print(path)
        return 0

    if args.command == "simulate":
        from .scenario import (demo_scenario as demo, load_scenario,
                               simulate_period, snapshot_rows)
        scenario = load_scenario(args.config) if args.config else demo()
        if args.seed is not None:
            scenario.seed = args.seed
        snap = simulate_period(scenario)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "snapshot.csv").write_text("\n".join(snapshot_rows(snap)) + "\n")
        print(f"charging fleet per company: {snap.charging_counts.tolist()}")
        return 0

    if args.command == "solve-upper":
        cfg = _config_from_args(args, mechanism=args.mechanism,
                                fixed_price=_parse_price(getattr(args, "price", None)),
                                compare=False)
        res = run_pipeline(cfg)
        print(f"j_g={res.upper.j_g!r} iterations={res.upper.iterations} "
              f"converged={res.upper.converged} seconds={res.upper_seconds:.2f}")
        return 0 if res.upper.converged else EXIT_NUMERICAL

    if args.command == "solve-lower":
        cfg = _config_from_args(args, compare=False)
        res = run_pipeline(cfg)
        total = sum(sol.j_m for sol in res.surge_solutions)
        print(f"tracking cost across companies: {total!r} "
              f"modes={[sol.mode for sol in res.surge_solutions]}")
        return 0

    if args.command == "baseline":
        price = _parse_price(args.price)
        cfg = _config_from_args(args, mechanism="fixed-price", fixed_price=price)
        res = run_pipeline(cfg)
        print(f"j_g={res.upper.j_g!r}")
        return 0 if res.upper.converged else EXIT_NUMERICAL

    if args.command == "grid-search":
        cfg = _config_from_args(args, mechanism="grid-search", p_max=args.p_max,
                                resolution=args.resolution, refine=args.refine)
        res = run_pipeline(cfg)
        print(f"j_g={res.upper.j_g!r}")
        return 0

    if args.command == "robustness":
        alphas = tuple(float(v) for v in args.alphas.split(","))
        cfg = _config_from_args(args, run_robustness=True, alphas=alphas,
                                samples=args.samples, compare=False)
        res = run_pipeline(cfg)
        means = {name: res.sweep.mean(name).tolist()
                 for name in ("rsg", "p1", "p2", "base")}
        print(json.dumps(means))
        return 0

    if args.command == "pipeline":
        cfg = _config_from_args(args, resolution=args.resolution,
                                run_robustness=args.with_sweep,
                                samples=args.samples)
        res = run_pipeline(cfg)
        total = sum(sol.j_m for sol in res.surge_solutions)
        print(f"j_g={res.upper.j_g!r} tracking={total!r} "
              f"artifacts={sorted(res.files)}")
        return 0 if res.upper.converged else EXIT_NUMERICAL

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
