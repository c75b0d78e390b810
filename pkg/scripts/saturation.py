"""Requested versus realized arrival rate under DD-SWA.

Arrivals are only admitted when the entry point is clear, so the realized
rate levels off once the approach is saturated.
"""

import argparse
import math

from aimsim import RunConfig, default_geometry, lane_rates_for, run

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--duration", type=float, default=300.0)
    args = ap.parse_args()
    geo = default_geometry()
    print(f"{'requested':>9} {'realized':>9}")
    for sigma in args.sigmas:
        vals = []
        for seed in range(args.trials):
            res = run(RunConfig(algorithm="ddswa", lane_rates=lane_rates_for(sigma, geo), seed=seed,
                                duration=args.duration))
            r = res.realized_rates()
            vals.append(math.fsum(r.values()) / len(r))
        print(f"{sigma:>9.2f} {math.fsum(vals) / len(vals):>9.3f}", flush=True)
