"""Seed-averaged convergence slot of MDPP's average transmit power over V."""

import argparse

import numpy as np

from wpcn.sim import PolicySpec, preset_topology, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p-avg", type=float, default=0.4)
    ap.add_argument("--V", type=float, nargs="+", default=[1e2, 1e3, 1e4, 1e5])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizon", type=float, default=1e6)
    args = ap.parse_args()

    specs = [PolicySpec("mdpp", P_avg=args.p_avg, V=v) for v in args.V]
    times = np.array([[m.convergence_time for m in run_batch(preset_topology("a"), specs, s, int(args.horizon))]
                      for s in range(args.seeds)])
    for v, col in zip(args.V, times.T):
        never = int(np.sum(col > args.horizon))
        print(f"V={v:<8.0e} mean={col.mean():10.1f}  median={np.median(col):10.1f}  not converged={never}")


if __name__ == "__main__":
    main()
