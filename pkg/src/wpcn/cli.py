"""Command-line entry point: ``wpcn run|sweep|calibrate|compare``."""

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .policy_fair import Utility
from .sim import (ConfigError, PolicySpec, ScenarioConfig, aggregate, export, load_config,
                  preset, run_batch, run_scenario)
from .sim.engine import calibration_samples
from .numerics import empirical_quantile

KKT_TOL = 1e-9


def load_scenario(arg: str) -> ScenarioConfig:
    if arg.lower() in ("a", "b", "c"):
        return preset(arg)
    return load_config(arg)


def _apply_flags(cfg: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if getattr(args, "trace", False):
        kw["record_trace"] = True
    return replace(cfg, **kw) if kw else cfg


def _problems(m) -> list:
    out = [f"{k} violated in {v} slots" for k, v in m.violations.items() if v]
    if m.kkt_max > KKT_TOL:
        out.append(f"KKT residual {m.kkt_max:.2e} exceeds {KKT_TOL:g}")
    values = [m.Q_total, m.tx_avg, *m.Q_avg, *m.D_avg]
    if not all(math.isfinite(v) and v >= 0 for v in values):
        out.append("non-finite or negative averages")
    return out


def _row(m) -> dict:
    return {"policy": m.policy, "seed": m.seed, "Q_total": m.Q_total, "tx_avg": m.tx_avg,
            **{f"Q_{i + 1}": q for i, q in enumerate(m.Q_avg)},
            **{f"D_{i + 1}": d for i, d in enumerate(m.D_avg)},
            "convergence_time": m.convergence_time, "kkt_max": m.kkt_max,
            "violations": m.violation_count}


def _print_rows(rows):
    if not rows:
        return
    keys = list(rows[0])
    print("\t".join(keys))
    for r in rows:
        print("\t".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))


def _write_table(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _summarise(group, label):
    agg = {k: aggregate([getattr(m, k) for m in group]) for k in ("Q_total", "tx_avg")}
    agg["Q_avg"] = aggregate([m.Q_avg for m in group])
    agg["convergence_time"] = aggregate([m.convergence_time for m in group])
    print(f"{label}: n={len(group)}  Q_total={agg['Q_total']['mean']:.6g} ± {agg['Q_total']['ci']:.2g}"
          f"  tx_avg={agg['tx_avg']['mean']:.6g} ± {agg['tx_avg']['ci']:.2g}"
          f"  Q_i={np.array2string(agg['Q_avg']['mean'], formatter={'float_kind': '{:.4e}'.format})}"
          f"  conv={agg['convergence_time']['mean']:.0f}")
    return {k: {kk: (vv.tolist() if isinstance(vv, np.ndarray) else vv) for kk, vv in v.items()}
            for k, v in agg.items()}


def _seeds(cfg, n):
    return [int(cfg.seed) + k for k in range(n)]


def cmd_run(args) -> int:
    cfg = _apply_flags(load_scenario(args.config), args)
    runs = [run_scenario(replace(cfg, seed=s)) for s in _seeds(cfg, args.replicates)]
    _print_rows([_row(m) for m in runs])
    out = args.out or cfg.output_path
    if out:
        for m in runs:
            stem = Path(out) if len(runs) == 1 else Path(out) / f"seed{m.seed}"
            export(m, stem)
    if len(runs) > 1:
        _summarise(runs, cfg.policy.label)
    bad = [(m.seed, p) for m in runs for p in _problems(m)]
    for seed, p in bad:
        print(f"invariant failure (seed {seed}): {p}", file=sys.stderr)
    return 1 if bad else 0


def cmd_sweep(args) -> int:
    cfg = _apply_flags(load_scenario(args.config), args)
    rows, summary, bad = [], {}, []
    for v in args.values:
        if args.param == "V":
            point = replace(cfg, policy=replace(cfg.policy, V=v))
        else:
            point = replace(cfg, topology=cfg.topology.with_distance_ratio(v))
        group = [run_scenario(replace(point, seed=s)) for s in _seeds(cfg, args.replicates)]
        for m in group:
            rows.append({args.param: v, **_row(m)})
            bad += [(v, m.seed, p) for p in _problems(m)]
        summary[str(v)] = _summarise(group, f"{args.param}={v:g}")
    if args.out:
        _write_table(rows, Path(args.out).with_suffix(".csv"))
        with open(Path(args.out).with_suffix(".json"), "w") as fh:
            json.dump({"param": args.param, "config": cfg.echo(), "points": summary}, fh, indent=2)
    for v, seed, p in bad:
        print(f"invariant failure ({args.param}={v:g}, seed {seed}): {p}", file=sys.stderr)
    return 1 if bad else 0


def cmd_calibrate(args) -> int:
    cfg = _apply_flags(load_scenario(args.config), args)
    n = args.samples or cfg.calibration_samples
    lam = calibration_samples(cfg.topology, cfg.seed, n)
    q = 1.0 - cfg.policy.P_avg / cfg.policy.P_peak
    lam_th = empirical_quantile(lam, q)
    print(json.dumps({"lam_th": lam_th, "quantile": q, "samples": n, "seed": int(cfg.seed)}))
    return 0


def _parse_policy(token: str, base: PolicySpec) -> PolicySpec:
    parts = token.split(":")
    kw = {"name": parts[0]}
    if len(parts) > 1:
        kw["utility"] = Utility(parts[1], float(parts[2]) if len(parts) > 2 else 1.0)
    return replace(base, **kw)


def cmd_compare(args) -> int:
    cfg = _apply_flags(load_scenario(args.config), args)
    specs = [_parse_policy(t, cfg.policy) for t in args.policies]
    runs = []
    for s in _seeds(cfg, args.replicates):
        runs += run_batch(cfg.topology, specs, s, cfg.horizon, cfg.calibration_samples)
    rows = [_row(m) for m in runs]
    _print_rows(rows)
    summary = {}
    for spec in specs:
        group = [m for m in runs if m.policy == spec.label]
        if len(group) > 1:
            summary[spec.label] = _summarise(group, spec.label)
    if args.out:
        _write_table(rows, Path(args.out).with_suffix(".csv"))
        with open(Path(args.out).with_suffix(".json"), "w") as fh:
            json.dump({"config": cfg.echo(), "policies": summary}, fh, indent=2)
    bad = [(m.policy, m.seed, p) for m in runs for p in _problems(m)]
    for pol, seed, p in bad:
        print(f"invariant failure ({pol}, seed {seed}): {p}", file=sys.stderr)
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML scenario file or preset name a/b/c")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--out")
    common.add_argument("--replicates", type=int, default=1)

    p = argparse.ArgumentParser(prog="wpcn", description="WPT / WPCN drift-plus-penalty simulator")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("--trace", action="store_true", help="record the per-slot trace for CSV export")
    run.set_defaults(func=cmd_run)
    sw = sub.add_parser("sweep", parents=[common], help="sweep V or the distance ratio")
    sw.add_argument("--param", choices=("V", "dr"), required=True)
    sw.add_argument("--values", type=float, nargs="+", required=True)
    sw.set_defaults(func=cmd_sweep)
    cal = sub.add_parser("calibrate", parents=[common], help="optimal-policy threshold")
    cal.add_argument("--samples", type=int)
    cal.set_defaults(func=cmd_calibrate)
    cmp_ = sub.add_parser("compare", parents=[common], help="several policies on one CSI stream")
    cmp_.add_argument("--policies", nargs="+", required=True,
                      help="name[:utility[:alpha]], e.g. optimal mdpp qf-wpt:maxmin")
    cmp_.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.replicates < 1:
        print("--replicates must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
