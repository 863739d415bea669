"""Throughput floor experiment: D_min set to a fraction of the unconstrained mean."""

import argparse
import math
from dataclasses import replace

import numpy as np

from wpcn.channel import Topology
from wpcn.policy_fair import Utility
from wpcn.sim import PolicySpec, run_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fraction", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--horizon", type=float, default=1e6)
    ap.add_argument("--pilot", type=float, default=2e5, help="slots of the unconstrained run")
    args = ap.parse_args()

    r = np.linspace(2.0, 6.0, 10)
    topo = Topology(tuple((float(r[k] * math.cos(2 * math.pi * k / 10)),
                           float(r[k] * math.sin(2 * math.pi * k / 10))) for k in range(10)),
                    n_antennas=40, m_antennas=1)
    base = PolicySpec("qgf-it", P_avg=0.03, V=100.0, utility=Utility("sum"))
    (free,) = run_batch(topo, [base], 0, int(args.pilot))
    d_min = args.fraction * float(free.D_avg.mean())
    print("unconstrained D_avg:", np.array2string(free.D_avg, precision=4))
    print(f"D_min = {d_min:.4f} bits/slot")
    for s in range(args.seeds):
        (m,) = run_batch(topo, [replace(base, D_min=d_min)], s, int(args.horizon))
        print(f"seed {s}: min D_i/D_min = {m.D_avg.min() / d_min:.4f}  tx_avg = {m.tx_avg:.4g}")


if __name__ == "__main__":
    main()
