"""QoS-aware general fair information transfer (QGF-IT) for the WPCN setting.

Each slot, every E-R gets a closed-form candidate: a water level ``delta``
from the Lambert W function, water-filled uplink covariance over the
singular modes of ``H'_i sqrt(G_i + Z_i)``, and a WPT/uplink time split.
The candidate with the largest ``(G_i + Z_i) * D_i`` is served; the E-AP
beams ``sqrt(P_peak) * u_max(W_i)`` at it for the fraction ``tau0``.

Water level and stationarity use natural logs; reported rates are in bits.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .channel import DimensionMismatch
from .numerics import (INV_E, RANK_RTOL, hermitian_eig, lambert_w0_exp_kernel,
                       lambert_w0_kernel, svd, waterfill_alloc)
from .policy_fair import Utility, solve_gamma

LN2 = math.log(2.0)


class NonPsdCovariance(ValueError):
    pass


@dataclass(frozen=True)
class WpcnConfig:
    P_avg: float
    P_peak: float
    D_min: float = 0.0
    V: float = 1.0
    noise_variance: float = 1e-13
    utility: Utility = field(default_factory=Utility)

    def __post_init__(self):
        if not 0 < self.P_avg <= self.P_peak:
            raise ValueError(f"need 0 < P_avg <= P_peak, got {self.P_avg}, {self.P_peak}")
        if self.D_min < 0 or not self.V > 0 or not self.noise_variance > 0:
            raise ValueError("need D_min >= 0, V > 0 and a positive noise variance")

    def d_max(self, M: int) -> float:
        """Per-slot throughput bound M log2(1 + P_peak / sigma^2), the gamma box edge."""
        return M * math.log2(1.0 + self.P_peak / self.noise_variance)


@dataclass(frozen=True)
class WpcnQueueSet:
    G: np.ndarray
    Zmin: np.ndarray
    Z_AP: float = 0.0

    @classmethod
    def initial(cls, K: int, D_min: float):
        return cls(np.full(K, float(D_min)), np.full(K, float(D_min)), 0.0)


@dataclass(frozen=True)
class ErCandidate:
    index: int
    feasible: bool
    delta: float = 0.0
    omega: float = 0.0
    S: np.ndarray = None
    tau0: float = 0.0
    tau_u: float = 1.0
    f_obj: float = 0.0
    D: float = 0.0
    kkt_residual: float = float("nan")


@njit(cache=True)
def kkt_residual(delta, theta_sq, lam_w, weight, Z_AP, P_peak):
    """Stationarity defect of the water level in natural-log units."""
    r = theta_sq.shape[0]
    mean_log = 0.0
    inv_sum = 0.0
    for j in range(r):
        mean_log += math.log(theta_sq[j])
        inv_sum += 1.0 / theta_sq[j]
    mean_log /= r
    zeta = (delta * lam_w - Z_AP) * P_peak
    return (-math.log(delta) + mean_log - 1.0 + delta / r * inv_sum
            - zeta / (r * weight))


@njit(cache=True)
def candidate_kernel(theta_sq, lam_w, weight, Z_AP, P_peak):
    """Closed-form candidate from the uplink mode gains theta_j^2 (> 0, length r).

    Returns (status, delta, omega, tau0, tau_u, sum_psi, D_bits, kkt).  status
    is 1 when feasible, 0 when the Lambert-W domain check fails (no delta),
    and -1 when a delta was computed but yields no usable rate.
    """
    r = theta_sq.shape[0]
    nan = math.nan
    if r == 0 or weight <= 0.0:
        return 0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, nan
    mean_log = 0.0
    inv_sum = 0.0
    for j in range(r):
        mean_log += math.log(theta_sq[j])
        inv_sum += 1.0 / theta_sq[j]
    mean_log /= r
    alpha = mean_log + Z_AP * P_peak / (r * weight) - 1.0
    beta = (lam_w * P_peak / weight - inv_sum) / r
    if beta > 0.0:
        delta = lambert_w0_exp_kernel(math.log(beta) + alpha) / beta
    elif beta < 0.0:
        if alpha > 700.0:
            return 0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, nan
        z = beta * math.exp(alpha)
        if z < -INV_E:
            return 0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, nan
        delta = lambert_w0_kernel(z) / beta
    else:
        delta = math.exp(alpha)
    if not (delta > 0.0 and delta < math.inf):
        return 0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, nan
    kkt = kkt_residual(delta, theta_sq, lam_w, weight, Z_AP, P_peak)
    sum_psi = 0.0
    rate = 0.0
    for j in range(r):
        psi = 1.0 - delta / theta_sq[j]
        if psi > 0.0:
            sum_psi += psi
            rate += math.log1p(theta_sq[j] * psi / delta)
    if sum_psi <= 0.0:
        return -1, delta, 0.0, 0.0, 1.0, 0.0, 0.0, kkt
    omega = delta * P_peak * lam_w / (weight * sum_psi)
    tau0 = 1.0 / (1.0 + omega)
    tau_u = omega / (1.0 + omega)
    return 1, delta, omega, tau0, tau_u, sum_psi, tau_u * rate / LN2, kkt


def throughput(H_up_i, S_i, tau_u: float) -> float:
    """tau_u * log2 det(I + H' S H'^H) in bits."""
    H = np.asarray(H_up_i, dtype=complex)
    S = np.asarray(S_i, dtype=complex)
    if S.shape != (H.shape[1], H.shape[1]):
        raise DimensionMismatch(f"S is {S.shape}, uplink channel is {H.shape}")
    if not 0.0 <= tau_u <= 1.0:
        raise ValueError(f"tau_u must lie in [0, 1], got {tau_u}")
    if not np.allclose(S, S.conj().T, atol=1e-12 * (1 + np.abs(S).max())):
        raise NonPsdCovariance("covariance is not Hermitian")
    lo = np.linalg.eigvalsh(0.5 * (S + S.conj().T))
    if lo.size and lo[0] < -1e-12 * max(1.0, abs(lo[-1])):
        raise NonPsdCovariance(f"covariance has eigenvalue {lo[0]:.3e}")
    if tau_u == 0.0:
        return 0.0
    A = np.eye(H.shape[0]) + H @ S @ H.conj().T
    sign, logdet = np.linalg.slogdet(A)
    return float(tau_u * logdet / LN2)


def er_candidate(H_up_i, W_i, q: WpcnQueueSet, cfg: WpcnConfig, index: int = 0) -> ErCandidate:
    weight = float(q.G[index] + q.Zmin[index])
    if weight <= 0.0:
        return ErCandidate(index, False)
    dec = svd(np.asarray(H_up_i) * math.sqrt(weight))
    if dec.rank == 0:
        return ErCandidate(index, False)
    theta_sq = dec.singulars ** 2
    lam_w = float(hermitian_eig(W_i).eigenvalues[0])
    status, delta, omega, tau0, tau_u, _, _, kkt = candidate_kernel(
        theta_sq, lam_w, weight, float(q.Z_AP), float(cfg.P_peak))
    if status != 1:
        return ErCandidate(index, False, delta=delta, kkt_residual=kkt)
    psi = waterfill_alloc(dec.singulars, delta)
    S = (weight / delta) * (dec.right * psi) @ dec.right.conj().T
    D = throughput(H_up_i, S, tau_u)
    return ErCandidate(index, True, delta, omega, S, tau0, tau_u, weight * D, D, kkt)


def select_candidate(candidates) -> int | None:
    """Index (0-based) of the largest f_obj, lowest index on ties; None if all are zero."""
    f = np.array([c.f_obj if isinstance(c, ErCandidate) else float(c) for c in candidates])
    if f.size == 0:
        raise ValueError("need at least one candidate")
    best = int(np.argmax(f))
    return best if f[best] > 0.0 else None


def build_downlink_beam(W_chosen, P_peak: float) -> np.ndarray:
    eig = hermitian_eig(W_chosen)
    return math.sqrt(P_peak) * eig.eigenvectors[:, 0]


def solve_gamma_it(utility: Utility, V: float, G, D_max: float) -> np.ndarray:
    return solve_gamma(utility, V, G, D_max)


def update_wpcn_queues(q: WpcnQueueSet, gamma, D, tau0: float, tx_power: float,
                       cfg: WpcnConfig) -> WpcnQueueSet:
    gamma = np.asarray(gamma, dtype=float)
    D = np.asarray(D, dtype=float)
    return WpcnQueueSet(
        np.maximum(q.G + gamma - D, 0.0),
        np.maximum(q.Zmin + cfg.D_min - D, 0.0),
        max(q.Z_AP + tau0 * tx_power - cfg.P_avg, 0.0),
    )


def uplink_mode_gains(H_up_i, weight: float) -> np.ndarray:
    """theta_j^2 of H' sqrt(weight) above the rank tolerance, descending."""
    s = svd(np.asarray(H_up_i) * math.sqrt(weight)).singulars
    return s ** 2


def rank_cut(mu, rtol: float = RANK_RTOL):
    """Number of eigenvalues of H'^H H' whose square roots clear the rank tolerance."""
    mu = np.asarray(mu)
    if mu.size == 0 or mu[0] <= 0:
        return 0
    return int(np.sum(mu > (rtol ** 2) * mu[0]))
