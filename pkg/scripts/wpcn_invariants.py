"""QGF-IT slot invariants and throughput on a config (default: scenario c)."""

import argparse
from dataclasses import replace

import numpy as np

from wpcn.cli import load_scenario
from wpcn.sim import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="c", help="YAML file or preset name")
    ap.add_argument("--horizon", type=float)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = load_scenario(args.config)
    if args.horizon:
        cfg = replace(cfg, horizon=int(args.horizon))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    m = run_scenario(cfg)
    print(f"{m.policy}  L={m.horizon}  tx_avg={m.tx_avg:.5g} (budget {cfg.policy.P_avg})  "
          f"converged at {m.convergence_time if m.converged else 'never'}")
    print(f"violations {m.violations}  max |KKT| {m.kkt_max:.2e} over {m.deltas_computed} water levels")
    print(f"idle slots {m.idle_slots}")
    print("D_avg (bits/slot):", np.array2string(m.D_avg, precision=4))
    if cfg.policy.D_min:
        print(f"min D_i / D_min = {m.D_avg.min() / cfg.policy.D_min:.4f}")


if __name__ == "__main__":
    main()
