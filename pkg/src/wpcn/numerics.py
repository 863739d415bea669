"""Dense Hermitian linear algebra and scalar special functions.

The eigensolver is a Householder reduction to real tridiagonal form followed
by implicit-shift QL iterations.  The kernels are compiled with numba so the
simulation loops can call them once per timeslot.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

HERMITIAN_RTOL = 1e-12
RANK_RTOL = 1e-12
INV_E = math.exp(-1.0)
_BRANCH_SLACK = 1e-14


class NumericsError(ValueError):
    pass


class NonSquare(NumericsError):
    pass


class NonHermitian(NumericsError):
    pass


class NonFinite(NumericsError):
    pass


class DomainError(NumericsError):
    pass


class EmptySamples(NumericsError):
    pass


@dataclass(frozen=True)
class EigResult:
    eigenvalues: np.ndarray  # (n,) real, descending
    eigenvectors: np.ndarray  # (n, n) complex, column k pairs with eigenvalues[k]


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray  # (m, r)
    singulars: np.ndarray  # (r,) descending, strictly above the rank tolerance
    right: np.ndarray  # (n, r)
    rank: int


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True)
def _tridiagonalize(a):
    """Reduce Hermitian ``a`` in place; return (diag, subdiag, Q) with real subdiag.

    Each step applies H = I - 2 v v^H to the trailing block as the rank-2
    update A <- A - 2 v w^H - 2 w v^H with w = A v - (v^H A v) v.
    """
    n = a.shape[0]
    q = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        q[i, i] = 1.0
    v = np.empty(n, dtype=np.complex128)
    w = np.empty(n, dtype=np.complex128)
    for k in range(n - 2):
        s = 0.0
        for i in range(k + 1, n):
            s += a[i, k].real * a[i, k].real + a[i, k].imag * a[i, k].imag
        normx = math.sqrt(s)
        if normx == 0.0:
            continue
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else 1.0 + 0.0j
        alpha = -phase * normx
        vn = 0.0
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] -= alpha
        for i in range(k + 1, n):
            vn += v[i].real * v[i].real + v[i].imag * v[i].imag
        inv = 1.0 / math.sqrt(vn)
        for i in range(k + 1, n):
            v[i] *= inv
        # p = A v on the trailing block
        for i in range(k + 1, n):
            acc = 0.0 + 0.0j
            for j in range(k + 1, n):
                acc += a[i, j] * v[j]
            w[i] = acc
        kappa = 0.0 + 0.0j
        for i in range(k + 1, n):
            kappa += np.conj(v[i]) * w[i]
        for i in range(k + 1, n):
            w[i] -= kappa * v[i]
        for i in range(k + 1, n):
            vi2 = 2.0 * v[i]
            wi2 = 2.0 * w[i]
            for j in range(k + 1, n):
                a[i, j] -= vi2 * np.conj(w[j]) + wi2 * np.conj(v[j])
        a[k + 1, k] = alpha
        a[k, k + 1] = np.conj(alpha)
        for i in range(k + 2, n):
            a[i, k] = 0.0
            a[k, i] = 0.0
        # Q <- Q H
        for i in range(n):
            acc = 0.0 + 0.0j
            for j in range(k + 1, n):
                acc += q[i, j] * v[j]
            acc *= 2.0
            for j in range(k + 1, n):
                q[i, j] -= acc * np.conj(v[j])

    d = np.empty(n)
    e = np.zeros(n)
    p = 1.0 + 0.0j
    for j in range(n):
        for i in range(n):
            q[i, j] *= p
        d[j] = a[j, j].real
        if j < n - 1:
            t = a[j + 1, j]
            at = abs(t)
            e[j] = at
            if at > 0.0:
                p = p * t / at
    return d, e, q


@njit(cache=True)
def _tql(d, e, z):
    """Implicit QL with Wilkinson shifts on a real symmetric tridiagonal.

    ``e[i]`` couples ``d[i]`` and ``d[i+1]``; ``e[n-1]`` must be zero.  ``z``
    accumulates the rotations column-wise.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                raise ValueError("tridiagonal QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.sqrt(g * g + 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.sqrt(f * f + g * g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(z.shape[0]):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


@njit(cache=True)
def eigh_kernel(a):
    """Eigen-decomposition of a Hermitian matrix (input is not modified).

    Returns eigenvalues in descending order and the matching unit eigenvectors
    as columns.  Ties keep the natural order produced by the QL sweep.
    """
    n = a.shape[0]
    if n == 0:
        return np.empty(0), np.empty((0, 0), dtype=np.complex128)
    work = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            work[i, j] = a[i, j]
    d, e, q = _tridiagonalize(work)
    if n > 1:
        e[n - 1] = 0.0
    z = np.eye(n)
    _tql(d, e, z)
    order = np.argsort(-d, kind="mergesort")
    vals = np.empty(n)
    vecs = np.zeros((n, n), dtype=np.complex128)
    for c in range(n):
        src = order[c]
        vals[c] = d[src]
        for i in range(n):
            acc = 0.0 + 0.0j
            for j in range(n):
                acc += q[i, j] * z[j, src]
            vecs[i, c] = acc
    return vals, vecs


@njit(cache=True)
def eigh_batch(a):
    """``eigh_kernel`` over a stack of matrices of shape (B, n, n)."""
    b, n, _ = a.shape
    vals = np.empty((b, n))
    vecs = np.empty((b, n, n), dtype=np.complex128)
    for i in range(b):
        w, v = eigh_kernel(a[i])
        vals[i] = w
        vecs[i] = v
    return vals, vecs


@njit(cache=True)
def lambert_w0_kernel(x):
    """Principal-branch Lambert W for x >= -1/e (no domain check)."""
    if x == 0.0:
        return 0.0
    if x <= -INV_E:
        return -1.0
    if x < -0.32:
        # series in p = sqrt(2(1 + e x)) about the branch point
        p = math.sqrt(2.0 * (1.0 + math.e * x))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    elif x < 3.0:
        l1 = math.log1p(x)
        w = l1 * (1.0 - math.log1p(l1) / (2.0 + l1))
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        if f == 0.0:
            break
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - dw
        if w_new < -1.0:
            w_new = -1.0
        if abs(w_new - w) <= 4e-16 * (1.0 + abs(w_new)):
            w = w_new
            break
        w = w_new
    return w


@njit(cache=True)
def lambert_w0_exp_kernel(s):
    """W(exp(s)) for real s, stable when exp(s) would overflow."""
    if s < 20.0:
        return lambert_w0_kernel(math.exp(s))
    # w + log w = s
    w = s - math.log(s)
    for _ in range(64):
        f = w + math.log(w) - s
        dw = f / (1.0 + 1.0 / w)
        w -= dw
        if abs(dw) <= 4e-16 * w:
            break
    return w


# ---------------------------------------------------------------------------
# public API

def _as_matrix(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise NonSquare(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has NaN or Inf entries")
    return a


def hermitian_eig(a) -> EigResult:
    """Eigenvalues (descending) and orthonormal eigenvectors of Hermitian ``a``.

    The input must be Hermitian to within ``1e-12 * ||a||_F``; it is
    symmetrized before the reduction.
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise NonSquare(f"matrix is {a.shape[0]}x{a.shape[1]}")
    fro = np.linalg.norm(a)
    skew = np.linalg.norm(a - a.conj().T)
    if skew > HERMITIAN_RTOL * fro:
        raise NonHermitian(f"||A - A^H||_F = {skew:.3e} exceeds tolerance")
    w, v = eigh_kernel(0.5 * (a + a.conj().T))
    return EigResult(w, v)


def svd(a) -> SvdResult:
    """Thin SVD restricted to the numerical rank.

    Computed from the Hermitian embedding [[0, A], [A^H, 0]], whose positive
    eigenvalues are the singular values and whose eigenvectors stack
    ``[u; v] / sqrt(2)``.
    """
    a = _as_matrix(a)
    m, n = a.shape
    k = min(m, n)
    if k == 0 or not np.any(a):
        return SvdResult(np.zeros((m, 0), complex), np.zeros(0), np.zeros((n, 0), complex), 0)
    emb = np.zeros((m + n, m + n), dtype=np.complex128)
    emb[:m, m:] = a
    emb[m:, :m] = a.conj().T
    w, vecs = eigh_kernel(emb)
    theta = w[:k]
    tol = RANK_RTOL * theta[0]
    r = int(np.sum(theta > tol))
    top = vecs[:, :r] * math.sqrt(2.0)
    u = top[:m]
    v = top[m:]
    # renormalise to absorb rounding in the half/half split
    u = u / np.linalg.norm(u, axis=0)
    v = v / np.linalg.norm(v, axis=0)
    return SvdResult(u, theta[:r].copy(), v, r)


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function, W(x) e^W(x) = x, W >= -1."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"lambert_w0 needs a finite argument, got {x}")
    if x < -INV_E:
        if x < -INV_E - _BRANCH_SLACK:
            raise DomainError(f"lambert_w0 undefined below -1/e, got {x}")
        x = -INV_E
    return float(lambert_w0_kernel(x))


def empirical_quantile(samples, q: float) -> float:
    """Nearest-rank quantile: the ceil(q n)-th smallest sample, index clamped to [1, n]."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise EmptySamples("empirical_quantile needs at least one sample")
    if not np.all(np.isfinite(s)):
        raise NonFinite("samples contain NaN or Inf")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    n = s.size
    # round() guards q*n against representation error, e.g. 0.7*100
    rank = math.ceil(round(q * n, 9))
    rank = min(max(rank, 1), n)
    return float(np.partition(s, rank - 1)[rank - 1])


def waterfill_alloc(thetas, delta: float) -> np.ndarray:
    """Per-mode fill levels max(0, 1 - delta / theta_j^2)."""
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas <= 0) or delta <= 0:
        raise ValueError("waterfill_alloc needs positive thetas and delta")
    return np.maximum(0.0, 1.0 - delta / thetas**2)
