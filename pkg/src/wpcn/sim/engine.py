"""Slot loop: sample CSI, run the policy, update queues, accumulate metrics.

Channel blocks are drawn once per (topology, seed, horizon) and fed to any
number of policy runners, so sweeps over V or P_avg share one CSI stream.
Each seed spawns two independent streams: channel draws and (for the
threshold policy) calibration draws.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ..channel import Topology, sample_block
from ..numerics import RANK_RTOL, NumericsError, eigh_batch, empirical_quantile
from ..policy_wpt import lambda_max_samples, stacked_gram
from . import kernels
from .config import PolicySpec, ScenarioConfig

BLOCK = 4096


class SimulationError(RuntimeError):
    pass


class EmptyTrace(ValueError):
    pass


@dataclass
class RunMetrics:
    policy: str
    seed: int
    horizon: int
    Q_avg: np.ndarray  # per-E-R time-averaged harvested power, eta applied
    Q_total: float
    tx_avg: float  # time-averaged transmit energy per slot (tau0 * ||x||^2)
    D_avg: np.ndarray
    final_queues: dict
    convergence_time: int
    violations: dict = field(default_factory=dict)
    kkt_max: float = 0.0
    deltas_computed: int = 0
    idle_slots: int = 0
    gap_bound: float = None
    lam_th: float = None
    config: dict = None
    trace: dict = None

    @property
    def converged(self) -> bool:
        return self.convergence_time <= self.horizon

    @property
    def violation_count(self) -> int:
        return int(sum(self.violations.values()))

    def summary(self) -> dict:
        return {
            "policy": self.policy, "seed": int(self.seed), "horizon": int(self.horizon),
            "Q_avg": [float(v) for v in self.Q_avg], "Q_total": float(self.Q_total),
            "tx_avg": float(self.tx_avg), "D_avg": [float(v) for v in self.D_avg],
            "final_queues": {k: (float(v) if np.ndim(v) == 0 else [float(x) for x in v])
                             for k, v in self.final_queues.items()},
            "convergence_time": int(self.convergence_time), "converged": self.converged,
            "violations": {k: int(v) for k, v in self.violations.items()},
            "kkt_max": float(self.kkt_max), "deltas_computed": int(self.deltas_computed),
            "idle_slots": int(self.idle_slots),
            "gap_bound": None if self.gap_bound is None else float(self.gap_bound),
            "lam_th": None if self.lam_th is None else float(self.lam_th),
            "config": self.config,
        }


def convergence_time(tx_trace, P_avg: float, tol_fraction: float = 1e-3) -> int:
    """Smallest L' after which every prefix average stays within tol of P_avg.

    Returns len(trace) + 1 when the final prefix is still outside the band.
    """
    tx = np.asarray(tx_trace, dtype=float)
    if tx.size == 0:
        raise EmptyTrace("convergence_time needs a non-empty trace")
    avg = np.cumsum(tx) / np.arange(1, tx.size + 1)
    bad = np.abs(avg - P_avg) > tol_fraction * P_avg
    if bad[-1]:
        return tx.size + 1
    idx = np.flatnonzero(bad)
    return 1 if idx.size == 0 else int(idx[-1]) + 2


# ---------------------------------------------------------------------------
# runners

class _Runner:
    """Per-policy state plus accumulators; ``step`` consumes one feature block."""

    def __init__(self, spec: PolicySpec, topo: Topology, horizon: int, record: bool):
        self.spec, self.topo, self.L, self.record = spec, topo, horizon, record
        K = topo.K
        self.tx = np.empty(horizon)
        self.Q_sum = np.zeros(K)
        self.D_sum = np.zeros(K)
        self.cols = {} if record else None
        self.pos = 0
        self.violations = {"peak": 0}
        self.kkt_max = 0.0
        self.deltas = 0
        self.idle = 0

    def _consume(self, b, tx, tau0, Q_raw, D, zap, Z, G):
        """Book one block: Q_raw excludes eta and tau0; tx is the beam power."""
        s = slice(self.pos, self.pos + b)
        energy = tx * tau0
        self.tx[s] = energy
        Q = self.topo.eta * Q_raw * tau0[:, None]
        self.Q_sum += Q.sum(axis=0)
        self.D_sum += D.sum(axis=0)
        self.violations["peak"] += int(np.sum(tx > self.spec.P_peak * (1 + 1e-12)))
        if self.record:
            for name, arr in (("tx_power", energy), ("tau0", tau0), ("Q", Q), ("D", D),
                              ("Z_AP", zap), ("Z", Z), ("G", G)):
                self.cols.setdefault(name, []).append(np.array(arr, copy=True))
        self.pos += b

    def finish(self, seed, config) -> RunMetrics:
        L, K = self.L, self.topo.K
        Q_avg = self.Q_sum / L
        trace = None
        if self.record:
            trace = {k: np.concatenate(v) for k, v in self.cols.items()}
            trace["slot"] = np.arange(L)
        return RunMetrics(
            policy=self.spec.label, seed=seed, horizon=L, Q_avg=Q_avg,
            Q_total=float(Q_avg.sum()), tx_avg=float(self.tx.sum() / L),
            D_avg=self.D_sum / L, final_queues=self.final_queues(),
            convergence_time=convergence_time(self.tx, self.spec.P_avg),
            violations=dict(self.violations), kkt_max=self.kkt_max,
            deltas_computed=self.deltas, idle_slots=self.idle,
            gap_bound=self.gap_bound(), lam_th=getattr(self, "lam_th", None),
            config=config, trace=trace)

    def gap_bound(self):
        return None

    def final_queues(self):
        return {}


class _ThresholdRunner(_Runner):
    needs = "wpt"

    def __init__(self, spec, topo, horizon, record, lam_th):
        super().__init__(spec, topo, horizon, record)
        self.lam_th = float(lam_th)

    def step(self, f, b):
        K = self.topo.K
        tx = np.empty(b)
        Q = np.empty((b, K))
        kernels.threshold_block(f["lam"], f["share"], self.lam_th, self.spec.P_peak, tx, Q)
        self._consume(b, tx, np.ones(b), Q, np.zeros((b, K)), np.zeros(b),
                      np.zeros((b, K)), np.zeros((b, K)))


class _MdppRunner(_Runner):
    needs = "wpt"

    def __init__(self, spec, topo, horizon, record):
        super().__init__(spec, topo, horizon, record)
        self.state = np.zeros(1)

    def step(self, f, b):
        K, p = self.topo.K, self.spec
        tx = np.empty(b)
        Q = np.empty((b, K))
        Z = np.empty(b)
        kernels.mdpp_block(f["lam"], f["share"], self.state, p.V, p.P_avg, p.P_peak, tx, Q, Z)
        self._consume(b, tx, np.ones(b), Q, np.zeros((b, K)), Z,
                      np.zeros((b, K)), np.zeros((b, K)))

    def gap_bound(self):
        return self.spec.P_peak ** 2 / 2.0 / self.spec.V

    def final_queues(self):
        return {"Z": float(self.state[0])}


class _QfRunner(_Runner):
    needs = "gram"

    def __init__(self, spec, topo, horizon, record):
        super().__init__(spec, topo, horizon, record)
        self.G = np.zeros(topo.K)
        self.Zmin = np.zeros(topo.K)
        self.zap = np.zeros(1)

    def step(self, f, b):
        K, M, p = self.topo.K, self.topo.M, self.spec
        tx = np.empty(b)
        Q = np.empty((b, K))
        G = np.empty((b, K))
        Z = np.empty((b, K))
        zap = np.empty(b)
        kernels.qf_wpt_block(f["gram"], f["H0"], K, M, p.utility.code, float(p.utility.alpha),
                             p.V, p.P_avg, p.P_peak, p.P_min, self.G, self.Zmin, self.zap,
                             tx, Q, G, Z, zap)
        self._consume(b, tx, np.ones(b), Q, np.zeros((b, K)), zap, Z, G)

    def final_queues(self):
        return {"G": self.G.copy(), "Z": self.Zmin.copy(), "Z_AP": float(self.zap[0])}


class _QgfRunner(_Runner):
    needs = "blocks"

    def __init__(self, spec, topo, horizon, record):
        super().__init__(spec, topo, horizon, record)
        K = topo.K
        self.G = np.full(K, float(spec.D_min))
        self.Zmin = np.full(K, float(spec.D_min))
        self.zap = np.zeros(1)
        self.stats = np.zeros(6)
        self.D_max = topo.M * math.log2(1.0 + spec.P_peak / topo.noise_variance)
        self.violations = {"peak": 0, "causality": 0, "tau_sum": 0}
        if topo.N < 4 * K * topo.M:
            warnings.warn(f"N={topo.N} < 4KM={4 * K * topo.M}: single-beneficiary beam "
                          "decisions may be suboptimal", RuntimeWarning, stacklevel=3)

    def step(self, f, b):
        K, M, p = self.topo.K, self.topo.M, self.spec
        tx = np.empty(b)
        tau0 = np.empty(b)
        Q = np.empty((b, K))
        D = np.empty((b, K))
        G = np.empty((b, K))
        Z = np.empty((b, K))
        zap = np.empty(b)
        kernels.qgf_it_block(f["mu"], f["lam_w"], f["vec_w"], f["gram"], K, M, p.utility.code,
                             float(p.utility.alpha), p.V, p.P_avg, p.P_peak, p.D_min, self.D_max,
                             RANK_RTOL, self.G, self.Zmin, self.zap, self.stats,
                             tx, tau0, Q, D, G, Z, zap)
        self._consume(b, tx, tau0, Q, D, zap, Z, G)
        self.violations["causality"] = int(self.stats[0])
        self.violations["tau_sum"] = int(self.stats[1])
        self.violations["peak"] += int(self.stats[2])
        self.kkt_max = float(self.stats[3])
        self.deltas = int(self.stats[4])
        self.idle = int(self.stats[5])

    def final_queues(self):
        return {"G": self.G.copy(), "Z": self.Zmin.copy(), "Z_AP": float(self.zap[0])}


# ---------------------------------------------------------------------------
# features

def block_features(topo: Topology, H, H_up, needs) -> dict:
    """Queue-independent per-slot quantities for one block of CSI."""
    f = {}
    b, K, M = H.shape[0], topo.K, topo.M
    gram = np.ascontiguousarray(stacked_gram(H))
    if "wpt" in needs:
        vals, vecs = eigh_batch(gram)
        lam = vals[:, 0]
        v = np.abs(vecs[:, :, 0]) ** 2
        f["lam"] = lam
        # x^H W_i x / P_peak for the beam along u_max of sum_i W_i
        f["share"] = lam[:, None] * v.reshape(b, K, M).sum(axis=2)
    if "gram" in needs or "blocks" in needs:
        f["gram"] = gram
    if "gram" in needs:
        f["H0"] = (np.abs(H[..., 0]) ** 2).sum(axis=2)
    if "blocks" in needs:
        idx = np.arange(K)
        diag = gram.reshape(b, K, M, K, M)[:, idx, :, idx, :]  # (K, b, M, M)
        diag = np.ascontiguousarray(np.swapaxes(diag, 0, 1)).reshape(b * K, M, M)
        vals, vecs = eigh_batch(diag)
        f["lam_w"] = vals[:, 0].reshape(b, K).copy()
        f["vec_w"] = np.ascontiguousarray(vecs[:, :, 0].reshape(b, K, M))
        if topo.uplink == "reciprocal":
            mu = vals / topo.noise_variance
        else:
            up = np.conj(np.swapaxes(H_up, -1, -2)) @ H_up
            mu, _ = eigh_batch(np.ascontiguousarray(up.reshape(b * K, M, M)))
        f["mu"] = np.ascontiguousarray(mu.reshape(b, K, M))
    return f


# ---------------------------------------------------------------------------
# drivers

def _streams(seed):
    ch, cal = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(ch), np.random.default_rng(cal)


def calibration_samples(topo: Topology, seed: int, n: int) -> np.ndarray:
    """lambda_max draws from the seed's calibration stream."""
    _, rng = _streams(seed)
    return lambda_max_samples(topo, n, rng)


def run_batch(topo: Topology, policies, seed: int = 0, horizon: int = 1_000_000,
              calibration_samples_n: int = 100_000, record_trace: bool = False,
              block: int = BLOCK):
    """Run several policies on one shared CSI stream; returns RunMetrics in order."""
    policies = list(policies)
    if horizon < 1:
        raise SimulationError("horizon must be at least 1")
    rng, cal_rng = _streams(seed)
    runners = []
    cal = None
    for spec in policies:
        if spec.name == "optimal":
            if cal is None:
                cal = lambda_max_samples(topo, calibration_samples_n, cal_rng)
            lam_th = empirical_quantile(cal, 1.0 - spec.P_avg / spec.P_peak)
            runners.append(_ThresholdRunner(spec, topo, horizon, record_trace, lam_th))
        elif spec.name == "mdpp":
            runners.append(_MdppRunner(spec, topo, horizon, record_trace))
        elif spec.name == "qf-wpt":
            runners.append(_QfRunner(spec, topo, horizon, record_trace))
        else:
            runners.append(_QgfRunner(spec, topo, horizon, record_trace))
    needs = {r.needs for r in runners}
    for start in range(0, horizon, block):
        b = min(block, horizon - start)
        H, H_up = sample_block(topo, rng, b, with_uplink=topo.uplink == "independent")
        try:
            feats = block_features(topo, H, H_up, needs)
            for r in runners:
                r.step(feats, b)
        except (NumericsError, ArithmeticError, ValueError) as exc:
            raise SimulationError(f"numeric failure in slots {start}..{start + b - 1}: {exc}") from exc
    out = []
    for spec, r in zip(policies, runners):
        echo = ScenarioConfig(topo, spec, horizon, max(calibration_samples_n, 1000), seed).echo()
        out.append(r.finish(seed, echo))
    return out


def run_scenario(cfg: ScenarioConfig) -> RunMetrics:
    (m,) = run_batch(cfg.topology, [cfg.policy], cfg.seed, cfg.horizon,
                     cfg.calibration_samples, cfg.record_trace)
    return m


def run_replicates(cfg: ScenarioConfig, seeds):
    return [run_scenario(replace(cfg, seed=int(s))) for s in seeds]


def aggregate(values, z: float = 1.96) -> dict:
    """Mean, standard error and normal-approximation CI half-width over replicates."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EmptyTrace("nothing to aggregate")
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0]) if x.shape[0] > 1 else np.zeros_like(mean)
    return {"mean": mean, "se": se, "ci": z * se, "n": int(x.shape[0])}
