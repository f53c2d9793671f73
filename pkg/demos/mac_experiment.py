"""Two-user Gaussian MAC under the log(1+Q) controller.

P=3, N=1 gives per-user capacity 1 and sum capacity log2(7)/2 ~ 1.40.  With
levels {0, 0.4, 1} the only infeasible pair is [1, 1], so the best symmetric
throughput is 0.7 per user (time-share [1, 0.4] and [0.4, 1]).  We load the
links at rho * 0.7 and watch Q(t)/t: it should vanish for rho < 1, and for
rho > 1 the summed slope can be no smaller than 2 * 0.7 * (rho - 1), the
excess of arrivals over the best sum throughput.

    python3 demos/mac_experiment.py [--horizon 1e5] [--out traces/]
"""

import argparse
from pathlib import Path

import numpy as np

from ratealloc.io import write_trace_csv
from ratealloc.region import GaussianMacRegion, discretize
from ratealloc.sim import ArrivalProcess, ControllerConfig, SimScenario, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=float, default=1e5)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    grid = discretize(GaussianMacRegion(3, 1), levels_override=[[0, 0.4, 1], [0, 0.4, 1]])
    print("feasible vectors:", [tuple(v) for v in grid.vectors.tolist()])
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    for rho in (0.9, 1.1):
        slopes = []
        for seed in range(args.seeds):
            sc = SimScenario(
                grid.space,
                ArrivalProcess.bernoulli([0.7 * rho] * 2),
                ControllerConfig(mode="heuristic", rule="log1pq", T=10),
                sample_every=100.0,
            )
            trace = run(sc, args.horizon, seed)
            slopes.append(trace.Q[-1] / trace.end_time)
            if out:
                write_trace_csv(out / f"mac_rho{rho}_seed{seed}.csv", trace)
        slopes = np.array(slopes)
        print(f"rho={rho}: Q/t per seed (link 0, link 1)")
        for s in slopes:
            print(f"    {s[0]:.5f}  {s[1]:.5f}")
        print(f"    mean sum slope {slopes.sum(axis=1).mean():.4f}, "
              f"floor {max(0.0, 2 * 0.7 * (rho - 1)):.4f}")


if __name__ == "__main__":
    main()
