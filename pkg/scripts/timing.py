"""Median coordination time per vehicle: DD-SWA over a wide rate grid and
combined optimization over low rates."""

import argparse
import statistics

from aimsim import RunConfig, default_geometry, lane_rates_for, run


def median_ms(algo, sigma, trials, duration):
    geo = default_geometry()
    ms = []
    for seed in range(trials):
        res = run(RunConfig(algorithm=algo, lane_rates=lane_rates_for(sigma, geo), seed=seed, duration=duration))
        if res.compute_ms_per_vehicle() is not None:
            ms.append(res.compute_ms_per_vehicle())
    return statistics.median(ms) if ms else None


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--duration", type=float, default=300.0)
    args = ap.parse_args()
    for algo, grid in (("ddswa", [0.1, 0.3, 0.5, 0.7, 0.9]), ("combined", [0.02, 0.04, 0.06, 0.08, 0.09])):
        for sigma in grid:
            m = median_ms(algo, sigma, args.trials, args.duration)
            print(f"{algo:>9} sigma={sigma:<5} median ms/vehicle {m:.1f}", flush=True)
