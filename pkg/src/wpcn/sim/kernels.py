"""Compiled per-slot loops over precomputed channel features.

Channel draws do not depend on the policy, so everything that is independent
of the queues is batched per block outside these loops.  Each kernel takes
the queue state as small mutable arrays, advances it over one block and
writes the per-slot trace columns.  Received powers are written before the
eta factor; the engine applies it.
"""

import math

import numpy as np
from numba import njit

from ..numerics import eigh_kernel
from ..policy_fair import solve_gamma_kernel
from ..policy_wpcn import candidate_kernel


@njit(cache=True)
def threshold_block(lam, share, lam_th, P_peak, tx, Q):
    """Optimal policy: peak power whenever lambda_max >= lambda_th."""
    for s in range(lam.shape[0]):
        if lam[s] >= lam_th:
            tx[s] = P_peak
            for i in range(share.shape[1]):
                Q[s, i] = P_peak * share[s, i]
        else:
            tx[s] = 0.0
            for i in range(share.shape[1]):
                Q[s, i] = 0.0


@njit(cache=True)
def mdpp_block(lam, share, state, V, P_avg, P_peak, tx, Q, Z_trace):
    """MDPP: peak power whenever lambda_max >= Z / V; state = [Z]."""
    Z = state[0]
    for s in range(lam.shape[0]):
        if lam[s] >= Z / V:
            tx[s] = P_peak
            for i in range(share.shape[1]):
                Q[s, i] = P_peak * share[s, i]
        else:
            tx[s] = 0.0
            for i in range(share.shape[1]):
                Q[s, i] = 0.0
        Z = max(Z + tx[s] - P_avg, 0.0)
        Z_trace[s] = Z
    state[0] = Z


@njit(cache=True)
def qf_wpt_block(gram, H0, K, M, code, alpha, V, P_avg, P_peak, P_min,
                 G, Zmin, zap, tx, Q, G_trace, Z_trace, zap_trace):
    """QF-WPT over one block.

    ``gram`` is the stacked downlink Gram (b, KM, KM); ``H0`` holds
    sum_m |H_i[m, 0]|^2, the harvest along e_1 used when every weight is zero.
    """
    KM = K * M
    A = np.empty((KM, KM), dtype=np.complex128)
    d = np.empty(KM)
    gamma = np.empty(K)
    for s in range(gram.shape[0]):
        for i in range(K):
            w = G[i] + Zmin[i]
            for m in range(M):
                d[i * M + m] = math.sqrt(w)
        for a in range(KM):
            for b in range(KM):
                A[a, b] = d[a] * gram[s, a, b] * d[b]
        vals, vecs = eigh_kernel(A)
        lam = vals[0]
        if lam - zap[0] >= 0.0:
            tx[s] = P_peak
            if lam > 0.0:
                # H_j u with u = sum_i sqrt(c_i) H_i^H v_i / sqrt(lam)
                for j in range(K):
                    acc = 0.0
                    for m in range(M):
                        row = j * M + m
                        z = 0.0j
                        for col in range(KM):
                            z += gram[s, row, col] * d[col] * vecs[col, 0]
                        acc += z.real * z.real + z.imag * z.imag
                    Q[s, j] = P_peak * acc / lam
            else:
                for j in range(K):
                    Q[s, j] = P_peak * H0[s, j]
        else:
            tx[s] = 0.0
            for j in range(K):
                Q[s, j] = 0.0
        solve_gamma_kernel(code, alpha, V, G, P_peak, gamma)
        for i in range(K):
            G[i] = max(G[i] + gamma[i] - Q[s, i], 0.0)
            Zmin[i] = max(Zmin[i] + P_min - Q[s, i], 0.0)
            G_trace[s, i] = G[i]
            Z_trace[s, i] = Zmin[i]
        zap[0] = max(zap[0] + tx[s] - P_avg, 0.0)
        zap_trace[s] = zap[0]


@njit(cache=True)
def qgf_it_block(mu, lam_w, vec_w, gram, K, M, code, alpha, V, P_avg, P_peak,
                 D_min, D_max, rank_rtol, G, Zmin, zap, stats,
                 tx, tau0_trace, Q, D, G_trace, Z_trace, zap_trace):
    """QGF-IT over one block.

    mu[s, i] are the eigenvalues of H'_i^H H'_i (descending), lam_w[s, i] and
    vec_w[s, i] the top eigenpair of H_i H_i^H (M x M, same nonzero spectrum
    as W_i).  ``stats`` accumulates [causality violations, tau-sum violations,
    peak violations, max |KKT residual|, deltas computed, idle slots].
    """
    gamma = np.empty(K)
    theta_sq = np.empty(M)
    for s in range(mu.shape[0]):
        best = -1
        best_f = 0.0
        best_tau0 = 0.0
        best_tau_u = 0.0
        best_D = 0.0
        best_trace = 0.0
        for i in range(K):
            w = G[i] + Zmin[i]
            if w <= 0.0:
                continue
            top = mu[s, i, 0]
            r = 0
            if top > 0.0:
                cut = rank_rtol * rank_rtol * top
                for j in range(M):
                    if mu[s, i, j] > cut:
                        theta_sq[r] = w * mu[s, i, j]
                        r += 1
            if r == 0:
                continue
            status, delta, omega, t0, tu, spsi, Dbits, kkt = candidate_kernel(
                theta_sq[:r], lam_w[s, i], w, zap[0], P_peak)
            if status != 0:
                stats[4] += 1.0
                if abs(kkt) > stats[3] or kkt != kkt:
                    stats[3] = abs(kkt) if kkt == kkt else math.inf
            if status == 1 and w * Dbits > best_f:
                best = i
                best_f = w * Dbits
                best_tau0 = t0
                best_tau_u = tu
                best_D = Dbits
                best_trace = w / delta * spsi
        for j in range(K):
            D[s, j] = 0.0
            Q[s, j] = 0.0
        if best < 0:
            tx[s] = 0.0
            tau0_trace[s] = 0.0
            stats[5] += 1.0
        else:
            lam = lam_w[s, best]
            for j in range(K):
                acc = 0.0
                for m in range(M):
                    z = 0.0j
                    for c in range(M):
                        z += gram[s, j * M + m, best * M + c] * vec_w[s, best, c]
                    acc += z.real * z.real + z.imag * z.imag
                Q[s, j] = P_peak * acc / lam
            tx[s] = P_peak
            tau0_trace[s] = best_tau0
            D[s, best] = best_D
            if best_tau_u * best_trace > best_tau0 * Q[s, best] + 1e-9:
                stats[0] += 1.0
            if abs(best_tau0 + best_tau_u - 1.0) > 1e-12:
                stats[1] += 1.0
            if tx[s] > P_peak * (1.0 + 1e-12):
                stats[2] += 1.0
        solve_gamma_kernel(code, alpha, V, G, D_max, gamma)
        for i in range(K):
            G[i] = max(G[i] + gamma[i] - D[s, i], 0.0)
            Zmin[i] = max(Zmin[i] + D_min - D[s, i], 0.0)
            G_trace[s, i] = G[i]
            Z_trace[s, i] = Zmin[i]
        zap[0] = max(zap[0] + tau0_trace[s] * tx[s] - P_avg, 0.0)
        zap_trace[s] = zap[0]
