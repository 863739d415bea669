"""Sum-received-power WPT: the threshold-optimal policy and its online MDPP counterpart.

Both policies are two-level: transmit at peak power along the top eigenvector
of the sum Gram matrix, or stay silent.  The beam is scaled as
``sqrt(P_peak) * u_max`` so that ``||x||^2 == P_peak``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import DimensionMismatch, Topology, sample_block
from .numerics import empirical_quantile, hermitian_eig, eigh_batch


@dataclass(frozen=True)
class WptConfig:
    P_avg: float
    P_peak: float
    V: float = 1e4
    eta: float = 0.5

    def __post_init__(self):
        if not 0 < self.P_avg <= self.P_peak:
            raise ValueError(f"need 0 < P_avg <= P_peak, got {self.P_avg}, {self.P_peak}")
        if not self.V > 0:
            raise ValueError(f"V must be positive, got {self.V}")


@dataclass(frozen=True)
class WptQueue:
    Z: float = 0.0

    def __post_init__(self):
        if self.Z < 0:
            raise ValueError("queue backlog cannot be negative")


@dataclass(frozen=True)
class BeamDecision:
    transmit: bool
    x: np.ndarray

    @property
    def tx_power(self) -> float:
        return float(np.real(np.vdot(self.x, self.x))) if self.transmit else 0.0

    @classmethod
    def silent(cls):
        return cls(False, np.zeros(0, dtype=complex))


def sum_channel(W_list) -> np.ndarray:
    W = [np.asarray(w) for w in W_list]
    if not W:
        raise DimensionMismatch("need at least one Gram matrix")
    shape = W[0].shape
    if any(w.shape != shape for w in W) or len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionMismatch("Gram matrices must be square and of equal size")
    return np.sum(W, axis=0)


def beam(W, P_peak: float) -> tuple:
    """(lambda_max, sqrt(P_peak) * u_max) for Hermitian W."""
    eig = hermitian_eig(W)
    return float(eig.eigenvalues[0]), math.sqrt(P_peak) * eig.eigenvectors[:, 0]


def optimal_decide(W_sum, lam_th: float, P_peak: float) -> BeamDecision:
    lam, x = beam(W_sum, P_peak)
    if lam >= lam_th:
        return BeamDecision(True, x)
    return BeamDecision.silent()


def mdpp_decide(W_sum, q: WptQueue, cfg: WptConfig) -> BeamDecision:
    lam, x = beam(W_sum, cfg.P_peak)
    if lam >= q.Z / cfg.V:
        return BeamDecision(True, x)
    return BeamDecision.silent()


def update_queue(q: WptQueue, tx_power: float, P_avg: float) -> WptQueue:
    return WptQueue(max(q.Z + tx_power - P_avg, 0.0))


def stacked_gram(H) -> np.ndarray:
    """Gram of the stacked downlink, shape (..., K*M, K*M).

    Its nonzero spectrum equals that of sum_i H_i^H H_i, at (KM)^3 instead of N^3.
    """
    *lead, K, M, N = H.shape
    Hs = H.reshape(*lead, K * M, N)
    return Hs @ np.conj(np.swapaxes(Hs, -1, -2))


def lambda_max_samples(topo: Topology, n_samples: int, rng, block: int = 8192) -> np.ndarray:
    out = np.empty(n_samples)
    done = 0
    while done < n_samples:
        b = min(block, n_samples - done)
        H, _ = sample_block(topo, rng, b, with_uplink=False)
        vals, _ = eigh_batch(stacked_gram(H))
        out[done:done + b] = vals[:, 0]
        done += b
    return out


def threshold_quantile(cfg: WptConfig) -> float:
    return 1.0 - cfg.P_avg / cfg.P_peak


def calibrate_threshold(topo: Topology, cfg: WptConfig, n_samples: int, rng) -> float:
    """Monte-Carlo estimate of the optimal threshold lambda_Th.

    Draws ``n_samples`` fresh slots and returns the nearest-rank quantile of
    lambda_max(sum_i W_i) at 1 - P_avg / P_peak.
    """
    if n_samples < 1000:
        raise ValueError("calibration needs at least 1000 samples")
    lam = lambda_max_samples(topo, n_samples, rng)
    return empirical_quantile(lam, threshold_quantile(cfg))
