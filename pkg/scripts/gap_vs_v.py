"""Received power of MDPP against the calibrated optimal policy over V.

    python3 scripts/gap_vs_v.py --seeds 10 --horizon 1e6 --out results/gap_vs_v.csv
"""

import argparse
import csv
import math

import numpy as np

from wpcn.sim import PolicySpec, aggregate, preset_topology, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p-avg", type=float, nargs="+", default=[0.2, 0.4, 0.8])
    ap.add_argument("--V", type=float, nargs="+", default=[1e3, 1e4, 1e5])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizon", type=float, default=1e6)
    ap.add_argument("--calibration", type=float, default=1e6)
    ap.add_argument("--out")
    args = ap.parse_args()

    topo = preset_topology("a")
    specs = [PolicySpec("optimal", P_avg=p) for p in args.p_avg]
    specs += [PolicySpec("mdpp", P_avg=p, V=v) for p in args.p_avg for v in args.V]
    per_seed = [run_batch(topo, specs, s, int(args.horizon), int(args.calibration))
                for s in range(args.seeds)]

    rows = []
    for j, spec in enumerate(specs):
        if spec.name != "mdpp":
            continue
        i_opt = args.p_avg.index(spec.P_avg)
        diff = [runs[i_opt].Q_total - runs[j].Q_total for runs in per_seed]
        q = aggregate([runs[j].Q_total for runs in per_seed])
        d = aggregate(diff)
        rows.append({"P_avg": spec.P_avg, "V": spec.V, "Q_mdpp": q["mean"], "gap": d["mean"],
                     "gap_se": d["se"], "B_over_V": spec.P_peak ** 2 / 2 / spec.V,
                     "tx_avg": float(np.mean([runs[j].tx_avg for runs in per_seed]))})
        print(f"P_avg={spec.P_avg:<4} V={spec.V:<8.0e} Q_mdpp={q['mean']:.5e} "
              f"gap={d['mean']:+.3e} ± {d['se']:.1e}  B/V={rows[-1]['B_over_V']:.1e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
