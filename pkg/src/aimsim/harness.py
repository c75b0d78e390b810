"""Experiment grids, summary statistics and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .coordination import WEIGHT_PROFILES, BatchTooLarge
from .engine import RunConfig, RunResult, lane_rates_for, run
from .model import ConfigError

QUANTILE_CONVENTION = "linear interpolation of order statistics at 0.25*(n-1) and 0.75*(n-1)"


@dataclass(frozen=True)
class BoxStats:
    q1: float
    q3: float
    mean: float
    median: float
    whisker_low: float
    whisker_high: float
    outliers: tuple
    n: int


def box_stats(samples) -> BoxStats:
    """Quartiles, mean and 1.5-IQR whiskers (clipped to the data range)."""
    x = np.asarray(list(samples), dtype=float)
    if x.size == 0:
        raise ValueError("box_stats needs at least one sample")
    q1, med, q3 = (float(q) for q in np.quantile(x, [0.25, 0.5, 0.75], method="linear"))
    iqr = q3 - q1
    hi = min(float(x.max()), q3 + 1.5 * iqr)
    lo = max(float(x.min()), q1 - 1.5 * iqr)
    out = tuple(sorted(float(v) for v in x if v > hi or v < lo))
    return BoxStats(q1, q3, math.fsum(x.tolist()) / x.size, med, lo, hi, out, int(x.size))


def avg_ttc(records) -> float | None:
    """Mean time from arrival to exit over vehicles that crossed."""
    vals = [r.t_X - r.t_A for r in records if r.crossed]
    return math.fsum(vals) / len(vals) if vals else None


def avg_objective(records) -> float | None:
    vals = [r.objective for r in records if r.crossed]
    return math.fsum(vals) / len(vals) if vals else None


@dataclass
class ComparisonSpec:
    algorithms: tuple = ("ddswa", "fifo", "signal")
    sigmas: tuple = (0.1, 0.3, 0.5)
    trials: int = 20
    profile: str = "comparison12"
    pattern: str = "homogeneous"  # or "alternating" (half rate on the second phase)
    base: RunConfig = field(default_factory=RunConfig)
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.sigmas:
            raise ConfigError("sigma grid is empty")
        if self.profile not in WEIGHT_PROFILES:
            raise ConfigError(f"unknown weight profile {self.profile!r}")

    def config_for(self, algorithm: str, sigma: float, trial: int) -> RunConfig:
        obj, sched = WEIGHT_PROFILES[self.profile]
        return replace(
            self.base,
            algorithm=algorithm,
            lane_rates=lane_rates_for(sigma, self.base.geometry, self.pattern),
            seed=self.seed + trial,
            objective=obj,
            scheduling=sched,
        )


def trial_summary(result: RunResult) -> dict:
    recs = result.vehicles
    rates = result.realized_rates()
    return {
        "seed": result.config.seed,
        "vehicles": len(recs),
        "crossed": sum(r.crossed for r in recs),
        "avg_ttc": avg_ttc(recs),
        "avg_objective": avg_objective(recs),
        "realized_rate": math.fsum(rates.values()) / len(rates) if rates else 0.0,
        "batch_sizes": result.batch_sizes(),
        "held": sum(r.n_held for r in result.rounds),
        "safety_ok": result.safety["ok"],
        "rear_end_violations": result.safety["rear_end_violations"],
        "overlap_violations": result.safety["overlap_violations"],
    }


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _box(vals):
    vals = [v for v in vals if v is not None]
    return asdict(box_stats(vals)) if vals else None


def summarize_cell(trials: list[dict]) -> dict:
    batch = [b for t in trials for b in t["batch_sizes"]]
    return {
        "mean_avg_ttc": _mean(t["avg_ttc"] for t in trials),
        "mean_avg_objective": _mean(t["avg_objective"] for t in trials),
        "ttc_box": _box(t["avg_ttc"] for t in trials),
        "objective_box": _box(t["avg_objective"] for t in trials),
        "batch_box": _box(batch),
        "realized_rate_box": _box(t["realized_rate"] for t in trials),
        "mean_realized_rate": _mean(t["realized_rate"] for t in trials),
        "safety_ok": all(t["safety_ok"] for t in trials),
    }


def run_cell(spec: ComparisonSpec, algorithm: str, sigma: float,
             runner: Callable[[RunConfig], RunResult] = run) -> tuple[dict, dict]:
    """All trials of one (algorithm, sigma) cell: (report entry, timing entry)."""
    trials, ms = [], []
    status = "ok"
    reason = ""
    for k in range(spec.trials):
        cfg = spec.config_for(algorithm, sigma, k)
        try:
            res = runner(cfg)
        except BatchTooLarge as exc:
            status, reason = "refused", str(exc)
            break
        except ConfigError as exc:
            status, reason = "undefined", str(exc)
            break
        trials.append(trial_summary(res))
        ms.append(res.compute_ms_per_vehicle())
    entry = {"algorithm": algorithm, "sigma": sigma, "status": status}
    try:
        entry["config"] = spec.config_for(algorithm, sigma, 0).to_dict()
    except ConfigError:
        entry["config"] = None
    if status != "ok":
        entry["reason"] = reason
        trials = []
        ms = []
    else:
        entry.update(summarize_cell(trials))
        entry["trials"] = trials
    timing = {
        "algorithm": algorithm,
        "sigma": sigma,
        "ms_per_vehicle": ms,
        "median_ms_per_vehicle": statistics.median([m for m in ms if m is not None]) if any(
            m is not None for m in ms) else None,
    }
    return entry, timing


def run_comparison(spec: ComparisonSpec, out_dir=None, runner=run, progress=None) -> dict:
    """Every (algorithm, sigma, trial) run; returns the report. With
    ``out_dir`` also writes report.json, timing.json and figs/*.csv."""
    cells, timings = [], []
    for algorithm in spec.algorithms:
        for sigma in spec.sigmas:
            entry, timing = run_cell(spec, algorithm, sigma, runner)
            cells.append(entry)
            timings.append(timing)
            if progress is not None:
                progress(entry)
    report = {
        "header": {
            "quantiles": QUANTILE_CONVENTION,
            "whiskers": "q3 + 1.5*IQR and q1 - 1.5*IQR, clipped to the sample range",
            "ttc": "t_X - t_A over crossed vehicles",
            "seeds": f"{spec.seed} + trial index",
            "config": "each cell embeds the resolved configuration of its first trial",
        },
        "spec": {
            "algorithms": list(spec.algorithms),
            "sigmas": list(spec.sigmas),
            "trials": spec.trials,
            "profile": spec.profile,
            "pattern": spec.pattern,
            "seed": spec.seed,
        },
        "cells": cells,
    }
    if out_dir is not None:
        write_report(report, timings, out_dir)
    return report


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def write_report(report: dict, timings: list, out_dir) -> Path:
    out = Path(out_dir)
    figs = out / "figs"
    figs.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    (out / "timing.json").write_text(json.dumps(timings, sort_keys=True, indent=1))
    ok = [c for c in report["cells"] if c["status"] == "ok"]

    def box_rows(key):
        for c in ok:
            b = c[key]
            if b is None:
                continue
            yield [c["algorithm"], c["sigma"], b["mean"], b["median"], b["q1"], b["q3"], b["whisker_low"],
                   b["whisker_high"], len(b["outliers"])]

    head = ["algorithm", "sigma", "mean", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers"]
    (figs / "ttc.csv").write_text(_csv(box_rows("ttc_box"), head))
    (figs / "objective.csv").write_text(_csv(box_rows("objective_box"), head))
    (figs / "batch_size.csv").write_text(_csv(box_rows("batch_box"), head))
    (figs / "realized_rate.csv").write_text(_csv(box_rows("realized_rate_box"), head))
    rows = []
    for t in timings:
        ms = [m for m in t["ms_per_vehicle"] if m is not None]
        if ms:
            b = box_stats(ms)
            rows.append([t["algorithm"], t["sigma"], b.mean, b.median, b.q1, b.q3, b.whisker_low, b.whisker_high,
                         len(b.outliers)])
    (figs / "compute_time.csv").write_text(_csv(rows, head))
    status = [[c["algorithm"], c["sigma"], c["status"], c.get("reason", "")] for c in report["cells"]]
    (figs / "cells.csv").write_text(_csv(status, ["algorithm", "sigma", "status", "reason"]))
    return out
