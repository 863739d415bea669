"""QoS-aware fair WPT (QF-WPT).

Per slot the E-AP beams along the top eigenvector of
``sum_i (Z_i + G_i) W_i - Z_AP I`` when its largest eigenvalue is
non-negative.  Auxiliary rates ``gamma`` come from the box-constrained
utility subproblem ``min -V phi(gamma) + sum_i G_i gamma_i``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .channel import DimensionMismatch
from .numerics import hermitian_eig
from .policy_wpt import BeamDecision

UTILITY_CODES = {"sum": 0, "pf": 1, "maxmin": 2, "alpha": 3}
_ALIASES = {
    "sum": "sum", "none": "sum", "no-fairness": "sum",
    "pf": "pf", "proportional": "pf", "proportionalfair": "pf",
    "maxmin": "maxmin", "mmf": "maxmin", "max-min": "maxmin",
    "alpha": "alpha", "alphafair": "alpha", "alpha-fair": "alpha",
}


class InvalidUtility(ValueError):
    pass


@dataclass(frozen=True)
class Utility:
    kind: str = "sum"
    alpha: float = 1.0

    def __post_init__(self):
        key = str(self.kind).lower().replace("_", "")
        if key not in _ALIASES:
            raise InvalidUtility(f"unknown utility {self.kind!r}")
        object.__setattr__(self, "kind", _ALIASES[key])
        if self.kind == "alpha" and not self.alpha > 0:
            raise InvalidUtility(f"alpha-fair utility needs alpha > 0, got {self.alpha}")

    @property
    def code(self) -> int:
        return UTILITY_CODES[self.kind]

    def __call__(self, gamma) -> float:
        g = np.asarray(gamma, dtype=float)
        if self.kind == "sum":
            return float(g.sum())
        if self.kind == "maxmin":
            return float(g.min())
        if self.kind == "pf" or (self.kind == "alpha" and self.alpha == 1.0):
            with np.errstate(divide="ignore"):
                return float(np.log(g).sum())
        a = self.alpha
        with np.errstate(divide="ignore"):
            return float((g ** (1.0 - a) / (1.0 - a)).sum())


@dataclass(frozen=True)
class FairConfig:
    P_avg: float
    P_peak: float
    P_min: float = 0.0
    V: float = 1.0
    eta: float = 0.5
    utility: Utility = field(default_factory=Utility)

    def __post_init__(self):
        if not 0 < self.P_avg <= self.P_peak:
            raise ValueError(f"need 0 < P_avg <= P_peak, got {self.P_avg}, {self.P_peak}")
        if self.P_min < 0 or not self.V > 0:
            raise ValueError("need P_min >= 0 and V > 0")


@dataclass(frozen=True)
class FairQueueSet:
    G: np.ndarray
    Zmin: np.ndarray
    Z_AP: float = 0.0

    @classmethod
    def zeros(cls, K: int):
        return cls(np.zeros(K), np.zeros(K), 0.0)

    @property
    def weights(self) -> np.ndarray:
        return self.G + self.Zmin


@njit(cache=True)
def solve_gamma_kernel(code, alpha, V, G, upper, out):
    K = G.shape[0]
    if code == 2:
        total = 0.0
        for i in range(K):
            total += G[i]
        level = upper if total <= V else 0.0
        for i in range(K):
            out[i] = level
        return
    for i in range(K):
        g = G[i]
        if code == 0:
            out[i] = upper if g <= V else 0.0
        elif g <= 0.0:
            out[i] = upper
        elif code == 1:
            out[i] = min(V / g, upper)
        else:
            out[i] = min((V / g) ** (1.0 / alpha), upper)


def solve_gamma(utility: Utility, V: float, G, upper: float) -> np.ndarray:
    """Minimiser of -V phi(gamma) + G . gamma over the box [0, upper]^K (closed forms).

    Ties in the sum utility (G_i == V) resolve to ``upper``.  For max-min, E-Rs
    with G_i = 0 sit at the common level, which gives the all-or-nothing rule
    on sum(G) versus V.
    """
    if not isinstance(utility, Utility):
        raise InvalidUtility(f"expected a Utility, got {utility!r}")
    if not upper > 0:
        raise ValueError("gamma upper bound must be positive")
    G = np.asarray(G, dtype=float)
    out = np.empty(G.shape[0])
    solve_gamma_kernel(utility.code, float(utility.alpha), float(V), G, float(upper), out)
    return out


def solve_gamma_generic(phi, grad, V: float, G, upper: float, tol: float = 1e-9,
                        max_iter: int = 10_000) -> np.ndarray:
    """Projected gradient descent for a user-supplied smooth concave ``phi``.

    Step size is 1/L with L estimated from successive gradients, backtracking
    whenever the objective would increase.
    """
    G = np.asarray(G, dtype=float)

    def obj(g):
        return -V * phi(g) + G @ g

    def project(g):
        return np.clip(g, 1e-300, upper)

    g = np.full(G.shape, 0.5 * upper)
    f = obj(g)
    step = 1.0
    for _ in range(max_iter):
        d = -V * np.asarray(grad(g)) + G
        while True:
            cand = project(g - step * d)
            fc = obj(cand)
            if fc <= f or step < 1e-300:
                break
            step *= 0.5
        d_new = -V * np.asarray(grad(cand)) + G
        dg = np.linalg.norm(cand - g)
        if dg > 0:
            lip = np.linalg.norm(d_new - d) / dg
            if lip > 0:
                step = 1.0 / lip
        converged = abs(f - fc) <= tol * max(1.0, abs(f))
        g, f = cand, fc
        if converged:
            break
    return g


def weighted_channel(W_list, q: FairQueueSet) -> np.ndarray:
    W = np.asarray(W_list)
    if W.ndim != 3 or W.shape[1] != W.shape[2] or W.shape[0] != len(q.G):
        raise DimensionMismatch(f"Gram stack of shape {W.shape} does not match K={len(q.G)}")
    c = q.G + q.Zmin
    return np.tensordot(c, W, axes=1) - q.Z_AP * np.eye(W.shape[1])


def qf_decide(W_prime, P_peak: float) -> BeamDecision:
    eig = hermitian_eig(W_prime)
    if eig.eigenvalues[0] >= 0.0:
        return BeamDecision(True, math.sqrt(P_peak) * eig.eigenvectors[:, 0])
    return BeamDecision.silent()


def update_fair_queues(q: FairQueueSet, gamma, Q_received, tx_power: float,
                       cfg: FairConfig) -> FairQueueSet:
    """Queue recursion; ``Q_received`` is the raw quadratic form x^H W_i x (no eta)."""
    gamma = np.asarray(gamma, dtype=float)
    Q = np.asarray(Q_received, dtype=float)
    return FairQueueSet(
        np.maximum(q.G + gamma - Q, 0.0),
        np.maximum(q.Zmin + cfg.P_min - Q, 0.0),
        max(q.Z_AP + tx_power - cfg.P_avg, 0.0),
    )
