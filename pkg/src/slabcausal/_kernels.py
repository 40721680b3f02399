"""Compiled evaluation of the log posterior for the sampler's inner loop.

Mirrors :func:`slabcausal.posterior.log_posterior_confounders` operation for
operation; the test suite checks the two agree. Matrices are tiny, so plain
loops beat LAPACK call overhead.
"""

import math

import numpy as np
from numba import njit

_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _chol(A, out):
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if not s > 0.0:
            return False
        d = math.sqrt(s)
        out[j, j] = d
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= out[i, k] * out[j, k]
            out[i, j] = t / d
        for i in range(j):
            out[i, j] = 0.0
    return True


@njit(cache=True)
def _lower_inv(L):
    n = L.shape[0]
    X = np.zeros((n, n))
    for c in range(n):
        for i in range(c, n):
            s = 1.0 if i == c else 0.0
            for k in range(c, i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
    return X


@njit(cache=True)
def _spike_slab(x, w_spike, v_spike, w_slab, v_slab):
    a = -math.inf
    b = -math.inf
    if w_spike > 0.0:
        a = math.log(w_spike) - 0.5 * (_LOG_2PI + math.log(v_spike)) - 0.5 * x * x / v_spike
    if w_slab > 0.0:
        b = math.log(w_slab) - 0.5 * (_LOG_2PI + math.log(v_slab)) - 0.5 * x * x / v_slab
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@njit(cache=True)
def log_posterior(Q, Qinv, C, free_vals, hp, hessian_only):
    """Return ``(value, status)``; status 0 ok, 1 non-PD Hessian, 2 bad recovery.

    ``hp`` packs ``(w_spike, v_spike, w_slab, v_slab, v_min, v_max, sd)``.
    """
    n = Q.shape[0]
    Omega = C @ C.T
    for i in range(n):
        Omega[i, i] += 1.0
    L = np.zeros((n, n))
    _chol(Omega, L)
    Linv = _lower_inv(L)
    M = Q @ Linv
    sd = np.empty(n)
    for i in range(n):
        sd[i] = M[i, i]
        if not sd[i] > 0.0 or not math.isfinite(sd[i]):
            return -math.inf, 2
    LQinv = L @ Qinv
    Bt = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            Bt[i, j] = -LQinv[i, j] * sd[j]
    Delta = -Bt
    Dinv = np.empty((n, n))
    for i in range(n):
        Delta[i, i] = 1.0
        for j in range(n):
            Dinv[i, j] = M[i, j] / sd[i]
    Oinv = Linv.T @ Linv
    St = Dinv @ Omega @ Dinv.T
    Kt = Delta.T @ Oinv @ Delta
    KD = Kt @ Dinv

    nb = n * (n - 1) // 2
    d = nb + n
    P = np.empty(nb, dtype=np.int64)
    R = np.empty(nb, dtype=np.int64)
    a = 0
    for p in range(n):
        for q in range(p):
            P[a] = p
            R[a] = q
            a += 1
    H = np.empty((d, d))
    for a in range(nb):
        p = P[a]
        q = R[a]
        for b in range(nb):
            r = P[b]
            s = R[b]
            H[a, b] = St[q, s] * Oinv[p, r] + Dinv[s, p] * Dinv[q, r]
        for r in range(n):
            val = St[r, q] * KD[r, p]
            if r == q:
                val += Dinv[r, p]
            val /= 2.0 * sd[r] * sd[r]
            H[a, nb + r] = val
            H[nb + r, a] = val
    for r in range(n):
        for s in range(n):
            val = St[r, s] * Kt[r, s]
            if r == s:
                val += 1.0
            H[nb + r, nb + s] = val / (4.0 * sd[r] * sd[r] * sd[s] * sd[s])
    for i in range(d):
        for j in range(i):
            m = 0.5 * (H[i, j] + H[j, i])
            H[i, j] = m
            H[j, i] = m
    HL = np.zeros((d, d))
    if not _chol(H, HL):
        return -math.inf, 1
    out = 0.0
    for i in range(d):
        out -= math.log(HL[i, i])
    if hessian_only:
        return out, 0

    w_spike, v_spike, w_slab, v_slab, v_min, v_max, csd = hp[0], hp[1], hp[2], hp[3], hp[4], hp[5], hp[6]
    log_norm = math.log(math.log(v_max) - math.log(v_min))
    for i in range(n):
        v = sd[i] * sd[i]
        if v < v_min or v > v_max:
            return -math.inf, 0
        out -= math.log(v) + log_norm
    for i in range(n):
        for j in range(i):
            out += _spike_slab(Bt[i, j], w_spike, v_spike, w_slab, v_slab)
    for k in range(free_vals.shape[0]):
        c = free_vals[k]
        out += -0.5 * (_LOG_2PI + 2.0 * math.log(csd)) - 0.5 * c * c / (csd * csd)
    return out, 0
