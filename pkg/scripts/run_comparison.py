"""Run one comparison grid from a TOML config and print the per-cell means.

    python3 scripts/run_comparison.py scripts/configs/comparison2.toml --trials 5 --out out/cmp2
"""

import argparse
from pathlib import Path

from aimsim.cli import main as cli_main


def fmt(value, digits):
    return "-" if value is None else f"{value:.{digits}f}"


def table(report_path: Path):
    import json

    rep = json.loads(report_path.read_text())
    print(f"{'algorithm':>9} {'sigma':>6} {'status':>9} {'TTC [s]':>9} {'objective':>10} {'realized':>9}")
    for c in rep["cells"]:
        ttc = c.get("mean_avg_ttc")
        obj = c.get("mean_avg_objective")
        rr = c.get("mean_realized_rate")
        print(f"{c['algorithm']:>9} {c['sigma']:>6} {c['status']:>9} {fmt(ttc, 2):>9} {fmt(obj, 1):>10} {fmt(rr, 3):>9}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config", type=Path)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--out", type=Path, default=Path("out/comparison"))
    args = ap.parse_args()
    argv = ["compare", "--config", str(args.config), "--out-dir", str(args.out)]
    if args.trials is not None:
        argv += ["--trials", str(args.trials)]
    rc = cli_main(argv)
    if rc == 0:
        table(args.out / "report.json")
    raise SystemExit(rc)
