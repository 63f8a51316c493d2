"""Command line interface.

Subcommands: ``generate`` (dynamic instances), ``run`` (single run),
``campaign`` (manifest execution), ``profile`` (profiles from reports),
``fig1`` (the two-scenario nonanticipation demonstration).
Exit codes: 0 success, 1 usage error, 2 run failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (aggregate, load_reports, nonanticipation_demo,
                    performance_profile, profiles_to_csv, run_campaign)
from .controller import ALGORITHM_IDS, ControllerConfig, run_online
from .instances import (CLASS_PROFILES, generate_dynamic_instance,
                        make_synthetic_base, parse_static_instance,
                        read_dynamic_instance, write_dynamic_instance)

USAGE_ERROR = 1
RUN_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=30)
    p.add_argument("--resample-period", type=int, default=30)
    p.add_argument("--per-epoch-budget", type=int, default=200)
    p.add_argument("--offline-budget", type=int, default=200)
    p.add_argument("--insertion-budget", type=int, default=12)
    p.add_argument("--clock", choices=("logical", "wallclock"), default="logical")
    p.add_argument("--epoch-seconds", type=float, default=0.5)
    p.add_argument("--offline-seconds", type=float, default=10.0)


def _config_from(args, algorithm: str) -> ControllerConfig:
    return ControllerConfig.for_algorithm(
        algorithm,
        seed=args.seed,
        pool_size=args.pool_size,
        resample_period=args.resample_period,
        per_epoch_budget=args.per_epoch_budget,
        offline_budget=args.offline_budget,
        insertion_budget=args.insertion_budget,
        clock_mode=args.clock,
        epoch_seconds=args.epoch_seconds,
        offline_seconds=args.offline_seconds,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="dsvrptw")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dynamic benchmark instance")
    g.add_argument("--class-id", type=int, required=True, choices=sorted(CLASS_PROFILES))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--horizon", type=int, default=480)
    g.add_argument("--base", default="synthetic",
                   help="Solomon-style file path, or 'synthetic'")
    g.add_argument("--customers", type=int, default=25,
                   help="synthetic base size (ignored with a file base)")
    g.add_argument("--vehicles", type=int, default=3)
    g.add_argument("--base-seed", type=int, default=None,
                   help="synthetic base geometry seed (defaults to --seed)")

    r = sub.add_parser("run", help="run one algorithm on one dynamic instance")
    r.add_argument("--instance", required=True)
    r.add_argument("--algorithm", required=True, choices=ALGORITHM_IDS)
    r.add_argument("--out-dir", default=None)
    _add_config_flags(r)

    c = sub.add_parser("campaign", help="execute an experiment manifest")
    c.add_argument("--manifest", required=True)
    c.add_argument("--parallelism", type=int, default=1)
    c.add_argument("--out-root", default=".")

    p = sub.add_parser("profile", help="performance profiles from run reports")
    p.add_argument("--reports-dir", required=True)
    p.add_argument("--out", default=None)

    sub.add_parser("fig1", help="two-scenario nonanticipation demonstration")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "generate":
            if args.base == "synthetic":
                base_seed = args.seed if args.base_seed is None else args.base_seed
                base = make_synthetic_base(args.customers, seed=base_seed,
                                           horizon=args.horizon,
                                           vehicles=args.vehicles)
            else:
                base = parse_static_instance(Path(args.base).read_text())
            inst = generate_dynamic_instance(base, CLASS_PROFILES[args.class_id],
                                             seed=args.seed, horizon=args.horizon)
            write_dynamic_instance(inst, args.out)
            print(f"wrote {args.out} ({inst.n} regions, "
                  f"{len(inst.deterministic_requests)} deterministic, "
                  f"{len(inst.dynamic_requests)} dynamic)")
        elif args.command == "run":
            inst = read_dynamic_instance(Path(args.instance).read_text())
            config = _config_from(args, args.algorithm)
            log, report = run_online(inst, config)
            print(f"{report.algorithm_id} on {report.instance_id} seed {report.seed}: "
                  f"{report.rejections} rejections / "
                  f"{report.total_requests} requests "
                  f"({report.evaluator_calls} evaluations)")
            if args.out_dir:
                out = Path(args.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                rid = f"{Path(args.instance).stem}__{args.algorithm}__s{args.seed}"
                (out / f"{rid}.log.txt").write_text(log.to_text())
                with (out / f"{rid}.events.jsonl").open("w") as fh:
                    for ev in report.events:
                        fh.write(json.dumps(ev, sort_keys=True) + "\n")
        elif args.command == "campaign":
            out_dir = run_campaign(args.manifest, parallelism=args.parallelism,
                                   out_root=args.out_root)
            print(f"campaign directory: {out_dir}")
            failures = out_dir / "failures.csv"
            if failures.exists():
                print(f"failures recorded in {failures}", file=sys.stderr)
                return RUN_FAILURE
        elif args.command == "profile":
            reports = load_reports(args.reports_dir)
            if not reports:
                print("no reports found", file=sys.stderr)
                return USAGE_ERROR
            profiles = performance_profile(aggregate(reports))
            text = profiles_to_csv(profiles)
            if args.out:
                Path(args.out).write_text(text)
                print(f"wrote {args.out}")
            else:
                print(text, end="")
        elif args.command == "fig1":
            record = nonanticipation_demo()
            print(json.dumps(record, indent=2, sort_keys=True))
    except BrokenPipeError:
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUN_FAILURE
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
