"""Command line entry point: ``aimsim run`` and ``aimsim compare``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .coordination import BatchTooLarge
from .engine import ALGORITHMS, RunConfig, SafetyViolation, lane_rates_for, load_config, run
from .harness import ComparisonSpec, run_comparison
from .model import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--dt", type=float)
    p.add_argument("--max-batch", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aimsim", description="Autonomous intersection simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one configuration")
    _common(r)
    r.add_argument("--algo", choices=ALGORITHMS)
    r.add_argument("--sigma", type=float, help="arrival rate per lane (veh/s)")
    r.add_argument("--duration", type=float, help="simulated seconds (default: 10 signal cycles)")
    r.add_argument("--trajectories", action="store_true", help="also write every vehicle's sampled trajectory")

    c = sub.add_parser("compare", help="run an algorithm x arrival-rate grid")
    _common(c)
    c.add_argument("--algo", nargs="+", choices=ALGORITHMS)
    c.add_argument("--sigma", nargs="+", type=float)
    c.add_argument("--trials", type=int)
    c.add_argument("--profile", help="weight profile: comparison12, comparison3 or comparison4")
    c.add_argument("--pattern", choices=("homogeneous", "alternating"))
    return ap


def _base_config(args) -> tuple[RunConfig, dict]:
    raw = {}
    if args.config is not None:
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.dt is not None:
        kw["dt"] = args.dt
    if args.max_batch is not None:
        kw["max_batch"] = args.max_batch
    return (replace(cfg, **kw) if kw else cfg), raw


def cmd_run(args) -> int:
    cfg, _ = _base_config(args)
    kw = {}
    if args.algo:
        kw["algorithm"] = args.algo
    if args.sigma is not None:
        kw["lane_rates"] = lane_rates_for(args.sigma, cfg.geometry)
    if args.duration is not None:
        kw["duration"] = args.duration
    if kw:
        cfg = replace(cfg, **kw)
    result = run(cfg)
    out = result.write(args.out_dir, trajectories=args.trajectories)
    print(json.dumps(result.summary(), indent=1, sort_keys=True))
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    base, raw = _base_config(args)
    grid = raw.get("compare", {})
    spec = ComparisonSpec(
        algorithms=tuple(args.algo or grid.get("algorithms", ("ddswa", "fifo", "signal"))),
        sigmas=tuple(args.sigma or grid.get("sigmas", (0.1, 0.3, 0.5))),
        trials=args.trials if args.trials is not None else grid.get("trials", 20),
        profile=args.profile or raw.get("profile", "comparison12"),
        pattern=args.pattern or grid.get("pattern", "homogeneous"),
        base=base,
        seed=base.seed,
    )

    def progress(cell):
        ttc = cell.get("mean_avg_ttc")
        shown = "" if ttc is None else f" mean TTC {ttc:.2f} s"
        print(f"{cell['algorithm']:>9} sigma={cell['sigma']:<5} {cell['status']}{shown}", flush=True)

    run_comparison(spec, out_dir=args.out_dir, progress=progress)
    print(f"wrote {args.out_dir / 'report.json'}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_run(args) if args.command == "run" else cmd_compare(args)
    except (ConfigError, tomllib.TOMLDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BatchTooLarge as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except SafetyViolation as exc:
        print(f"safety violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
