"""Network topology, path loss and i.i.d. Rayleigh CSI sampling."""

import math
from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ChannelError(ValueError):
    pass


class NonPositiveDistance(ChannelError):
    pass


class DimensionMismatch(ChannelError):
    pass


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Topology:
    """E-AP at ``eap_position`` with ``n_antennas``; K E-Rs with ``m_antennas`` each.

    ``uplink`` is ``"reciprocal"`` (H'_i = H_i^H / sigma) or ``"independent"``
    (a fresh Rayleigh draw with the same path loss, also scaled by 1/sigma).
    """

    er_positions: tuple
    eap_position: tuple = (0.0, 0.0)
    n_antennas: int = 30
    m_antennas: int = 4
    carrier_frequency: float = 2.4e9
    pathloss_exponent: float = 3.0
    noise_variance: float = dbm_to_watts(-100.0)
    eta: float = 0.5
    uplink: str = "reciprocal"

    def __post_init__(self):
        pos = tuple(tuple(float(c) for c in p) for p in self.er_positions)
        object.__setattr__(self, "er_positions", pos)
        object.__setattr__(self, "eap_position", tuple(float(c) for c in self.eap_position))
        if len(pos) < 1:
            raise ChannelError("topology needs at least one E-R")
        if any(len(p) != 2 for p in pos + (self.eap_position,)):
            raise ChannelError("positions must be 2-D coordinates")
        if not self.n_antennas > self.m_antennas >= 1:
            raise ChannelError(
                f"need N > M >= 1, got N={self.n_antennas}, M={self.m_antennas}")
        if not 0.0 <= self.eta < 1.0:
            raise ChannelError(f"eta must lie in [0, 1), got {self.eta}")
        if self.noise_variance <= 0 or self.carrier_frequency <= 0:
            raise ChannelError("noise variance and carrier frequency must be positive")
        if self.uplink not in ("reciprocal", "independent"):
            raise ChannelError(f"unknown uplink model {self.uplink!r}")
        if np.any(self.distances <= 0):
            raise NonPositiveDistance("every E-R must be at a positive distance from the E-AP")

    @property
    def K(self) -> int:
        return len(self.er_positions)

    @property
    def N(self) -> int:
        return self.n_antennas

    @property
    def M(self) -> int:
        return self.m_antennas

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(*(np.asarray(self.er_positions) - np.asarray(self.eap_position)).T)

    @property
    def reference_gain(self) -> float:
        """Free-space power gain at 1 m."""
        return (SPEED_OF_LIGHT / (4.0 * math.pi * self.carrier_frequency)) ** 2

    @property
    def path_gains(self) -> np.ndarray:
        return np.array([path_loss(d, self) for d in self.distances])

    def with_distance_ratio(self, d_r: float) -> "Topology":
        """Move the farthest E-R radially so that d_far / d_near == d_r."""
        d = self.distances
        near, far = int(np.argmin(d)), int(np.argmax(d))
        if near == far:
            far = 1 if self.K > 1 else 0
        if d_r <= 0:
            raise NonPositiveDistance("distance ratio must be positive")
        origin = np.asarray(self.eap_position)
        direction = (np.asarray(self.er_positions[far]) - origin) / d[far]
        pos = list(self.er_positions)
        pos[far] = tuple(origin + direction * d_r * d[near])
        return replace(self, er_positions=tuple(pos))


@dataclass(frozen=True)
class SlotCSI:
    H: np.ndarray  # (K, M, N) downlink
    H_up: np.ndarray  # (K, N, M) noise-normalised uplink
    W: np.ndarray  # (K, N, N) Gram matrices H_i^H H_i


def path_loss(distance: float, topo: Topology) -> float:
    """Linear power gain G0 * d^-exponent, G0 the free-space gain at 1 m."""
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance}")
    return topo.reference_gain * distance ** (-topo.pathloss_exponent)


def _normals_per_slot(topo: Topology) -> int:
    per = topo.K * topo.M * topo.N * 2
    return per * 2 if topo.uplink == "independent" else per


def sample_block(topo: Topology, rng: np.random.Generator, n: int, with_uplink: bool = True):
    """Draw ``n`` consecutive slots; returns (H, H_up) of shapes (n,K,M,N), (n,K,N,M).

    Draws are laid out slot by slot, so splitting a horizon into blocks of any
    size reproduces the same channel sequence.  ``with_uplink=False`` skips
    building H_up (returned as None) without changing the draws.
    """
    K, M, N = topo.K, topo.M, topo.N
    # adjacent (re, im) pairs viewed as complex128
    z = rng.standard_normal((n, _normals_per_slot(topo))).view(np.complex128)
    scale = np.sqrt(topo.path_gains / 2.0)[None, :, None, None]
    down = K * M * N
    H = z[:, :down].reshape(n, K, M, N) * scale
    sigma = math.sqrt(topo.noise_variance)
    if not with_uplink:
        H_up = None
    elif topo.uplink == "independent":
        H_up = z[:, down:].reshape(n, K, N, M) * (scale / sigma)
    else:
        H_up = np.conj(np.swapaxes(H, -1, -2)) / sigma
    return H, H_up


def sample_slot(topo: Topology, rng: np.random.Generator) -> SlotCSI:
    H, H_up = sample_block(topo, rng, 1)
    H, H_up = H[0], H_up[0]
    W = np.conj(np.swapaxes(H, -1, -2)) @ H
    return SlotCSI(H, H_up, W)


def received_power(W_i, x, eta: float) -> float:
    """Harvested power eta * x^H W_i x (the caller applies any tau_0 factor)."""
    W_i = np.asarray(W_i)
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    if W_i.ndim != 2 or W_i.shape != (x.shape[0], x.shape[0]):
        raise DimensionMismatch(f"W is {W_i.shape}, x has length {x.shape[0]}")
    return float(eta * np.real(np.vdot(x, W_i @ x)))
