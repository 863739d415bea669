"""Per-E-R received power under max-min, proportional and no fairness as d_r grows."""

import argparse

import numpy as np

from wpcn.policy_fair import Utility
from wpcn.sim import PolicySpec, preset_topology, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", type=float, nargs="+", default=[1.0, 1.5, 2.0, 2.5])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizon", type=float, default=1e6)
    ap.add_argument("--v-mmf", type=float, default=3.0)
    ap.add_argument("--v-pf", type=float, default=1e-4)
    args = ap.parse_args()

    specs = {
        "max-min": PolicySpec("qf-wpt", V=args.v_mmf, utility=Utility("maxmin")),
        "proportional": PolicySpec("qf-wpt", V=args.v_pf, utility=Utility("pf")),
        "none (MDPP)": PolicySpec("mdpp", V=1e4),
    }
    for dr in args.ratios:
        topo = preset_topology("b", dr)
        per_seed = [run_batch(topo, list(specs.values()), s, int(args.horizon)) for s in range(args.seeds)]
        for k, name in enumerate(specs):
            q = np.mean([runs[k].Q_avg for runs in per_seed], axis=0)
            print(f"d_r={dr:<4} {name:<13} Q1={q[0]:.4e} Q2={q[1]:.4e} total={q.sum():.4e} "
                  f"rel diff={abs(q[0] - q[1]) / q.max():.3f}")


if __name__ == "__main__":
    main()
