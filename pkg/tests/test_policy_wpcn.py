import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wpcn.channel import DimensionMismatch
from wpcn.numerics import hermitian_eig
from wpcn.policy_fair import Utility
from wpcn.policy_wpcn import (ErCandidate, NonPsdCovariance, WpcnConfig, WpcnQueueSet,
                              build_downlink_beam, candidate_kernel, er_candidate, kkt_residual,
                              rank_cut, select_candidate, solve_gamma_it, throughput,
                              update_wpcn_queues, uplink_mode_gains)

SIGMA2 = 1e-13


def link(rng, M, N, pl, sigma2=SIGMA2):
    """Downlink H (M x N), its Gram W and the reciprocal noise-normalised uplink."""
    H = math.sqrt(pl / 2) * (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N)))
    return H, H.conj().T @ H, H.conj().T / math.sqrt(sigma2)


def scalar_residual(delta, theta_sq, lam, w, zap, P):
    return (-math.log(delta) + math.log(theta_sq) - 1 + delta / theta_sq
            + zap * P / w - delta * lam * P / w)


def test_scalar_case_zeroes_stationarity():
    rng = np.random.default_rng(1)
    _, W, Hup = link(rng, 1, 40, 1e-5)
    cfg = WpcnConfig(0.03, 2.0)
    q = WpcnQueueSet(np.array([0.7]), np.array([0.3]), 5.0)
    cand = er_candidate(Hup, W, q, cfg)
    assert cand.feasible
    theta_sq = float(np.linalg.norm(Hup) ** 2)
    lam = float(np.linalg.norm(W, 2))
    assert abs(scalar_residual(cand.delta, theta_sq, lam, 1.0, 5.0, 2.0)) <= 1e-9
    assert abs(cand.kkt_residual) <= 1e-9


def test_candidate_structure():
    rng = np.random.default_rng(2)
    _, W, Hup = link(rng, 4, 30, 3e-5)
    cfg = WpcnConfig(0.4, 2.0)
    q = WpcnQueueSet(np.array([2.0]), np.array([1.0]), 3.0)
    c = er_candidate(Hup, W, q, cfg)
    assert c.feasible
    assert c.tau0 + c.tau_u == pytest.approx(1.0, abs=1e-15)
    ev = np.linalg.eigvalsh(c.S)
    assert ev.min() >= -1e-12 * ev.max()
    assert c.f_obj == pytest.approx(3.0 * c.D, rel=1e-15)
    assert c.D == pytest.approx(throughput(Hup, c.S, c.tau_u))
    harvest = c.tau0 * 2.0 * np.linalg.eigvalsh(W)[-1]
    assert c.tau_u * np.trace(c.S).real <= harvest * (1 + 1e-9) + 1e-9
    assert c.tau_u * np.trace(c.S).real == pytest.approx(harvest, rel=1e-9)


@given(st.integers(1, 4), st.floats(-7, -3), st.floats(-2, 2), st.floats(0, 5), st.integers(0, 10**6))
def test_energy_causality_and_kkt(M, log_pl, log_w, zap, seed):
    rng = np.random.default_rng(seed)
    _, W, Hup = link(rng, M, 24, 10.0 ** log_pl)
    w = 10.0 ** log_w
    q = WpcnQueueSet(np.array([w]), np.zeros(1), zap)
    c = er_candidate(Hup, W, q, WpcnConfig(0.4, 2.0))
    if c.feasible:
        assert abs(c.kkt_residual) <= 1e-9
        harvest = c.tau0 * 2.0 * float(np.linalg.eigvalsh(W)[-1])
        assert c.tau_u * np.trace(c.S).real <= harvest + 1e-9
        assert c.tau0 + c.tau_u == pytest.approx(1.0, abs=1e-12)
    else:
        assert c.f_obj == 0.0


def test_degenerate_weight_is_infeasible():
    rng = np.random.default_rng(3)
    _, W, Hup = link(rng, 2, 10, 1e-5)
    c = er_candidate(Hup, W, WpcnQueueSet.initial(1, 0.0), WpcnConfig(0.4, 2.0))
    assert not c.feasible and c.f_obj == 0.0 and c.tau0 == 0.0 and c.tau_u == 1.0


def test_lambert_domain_branch_is_infeasible():
    # one mode: beta * e^alpha = (lam P theta^2 / w - 1) e^(Z_AP P / w - 1)
    theta_sq, lam, w, zap, P = 1.0, 1e-3, 1.0, 1.0, 2.0
    z = (lam * P * theta_sq / w - 1) * math.exp(zap * P / w - 1)
    assert z < -math.exp(-1)
    status, *_ = candidate_kernel(np.array([theta_sq]), lam, w, zap, P)
    assert status == 0


def test_waterline_above_all_modes_is_infeasible():
    # large Z_AP raises the water level past the only mode gain
    status, delta, *_ = candidate_kernel(np.array([1e-3]), 1e4, 1.0, 100.0, 2.0)
    assert status == -1 and delta > 1e-3


def test_kkt_residual_matches_scalar_formula():
    args = (0.37, np.array([2.5]), 0.8, 1.7, 0.4, 2.0)
    assert kkt_residual(*args) == pytest.approx(scalar_residual(0.37, 2.5, 0.8, 1.7, 0.4, 2.0), abs=1e-14)


def test_select_candidate_examples():
    assert select_candidate([0.0, 0.0, 0.0]) is None
    assert select_candidate([1.0, 3.0, 2.0]) == 1
    assert select_candidate([2.0, 2.0]) == 0
    assert select_candidate([ErCandidate(0, False), ErCandidate(1, True, f_obj=0.5)]) == 1
    with pytest.raises(ValueError):
        select_candidate([])


def test_downlink_beam_examples(rng):
    np.testing.assert_allclose(np.abs(build_downlink_beam(np.diag([4.0, 1.0]), 2.0)), [math.sqrt(2), 0])
    _, W, _ = link(rng, 3, 8, 1.0)
    x = build_downlink_beam(W, 2.0)
    assert np.vdot(x, x).real == pytest.approx(2.0)
    assert np.vdot(x, W @ x).real == pytest.approx(2.0 * np.linalg.eigvalsh(W)[-1], rel=1e-12)


def test_throughput_examples(rng):
    assert throughput(np.ones((3, 2)), np.zeros((2, 2)), 1.0) == 0.0
    assert throughput(np.ones((1, 1)), np.array([[3.0]]), 1.0) == pytest.approx(2.0)
    H = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    S = a @ a.conj().T
    oracle = np.sum(np.log2(hermitian_eig(np.eye(4) + H @ S @ H.conj().T).eigenvalues))
    assert throughput(H, S, 0.6) == pytest.approx(0.6 * oracle, rel=1e-12)


def test_throughput_errors():
    with pytest.raises(NonPsdCovariance):
        throughput(np.ones((2, 2)), np.diag([1.0, -1.0]), 1.0)
    with pytest.raises(NonPsdCovariance):
        throughput(np.ones((2, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]), 1.0)
    with pytest.raises(DimensionMismatch):
        throughput(np.ones((2, 2)), np.eye(3), 1.0)
    with pytest.raises(ValueError):
        throughput(np.ones((2, 2)), np.eye(2), 1.5)


def test_solve_gamma_it_examples():
    np.testing.assert_allclose(solve_gamma_it(Utility("pf"), 1.0, [1.0], 10.0), [1.0])
    np.testing.assert_allclose(solve_gamma_it(Utility("pf"), 1.0, [0.0], 10.0), [10.0])
    np.testing.assert_allclose(solve_gamma_it(Utility("sum"), 3.0, [6.0], 10.0), [0.0])
    axis = np.linspace(0, 10, 10001)
    assert axis[np.argmin(-3.0 * axis + 6.0 * axis)] == 0.0


def test_d_max():
    assert WpcnConfig(0.4, 2.0).d_max(4) == pytest.approx(4 * math.log2(1 + 2e13))


def test_update_wpcn_queues_examples():
    cfg = WpcnConfig(0.4, 2.0, D_min=1.0)
    q = WpcnQueueSet(np.array([3.0, 2.0]), np.array([1.5, 0.5]), 2.0)
    q2 = update_wpcn_queues(q, [1.0, 1.0], [1.0, 1.0], 0.2, 2.0, cfg)
    np.testing.assert_allclose(q2.G, q.G)
    np.testing.assert_allclose(q2.Zmin, q.Zmin)
    assert q2.Z_AP == pytest.approx(2.0)
    cfg0 = WpcnConfig(0.4, 2.0)
    q3 = update_wpcn_queues(WpcnQueueSet.initial(1, 0.0), [1.0], [0.0], 0.5, 2.0, cfg0)
    assert q3.Z_AP == pytest.approx(0.6) and q3.G[0] == 1.0


def test_initial_queues():
    q = WpcnQueueSet.initial(3, 0.5)
    assert np.all(q.G == 0.5) and np.all(q.Zmin == 0.5) and q.Z_AP == 0.0
    with pytest.raises(ValueError):
        WpcnConfig(0.4, 2.0, D_min=-1.0)


def test_rank_helpers(rng):
    Hup = rng.standard_normal((5, 1)) @ rng.standard_normal((1, 3))
    mu = np.sort(np.linalg.eigvalsh(Hup.T @ Hup))[::-1]
    assert rank_cut(mu) == 1
    assert uplink_mode_gains(Hup, 2.0).size == 1
    assert rank_cut(np.zeros(3)) == 0
