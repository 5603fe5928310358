"""Compiled inner loops.

All loops are written element-wise (no BLAS calls) so results are bit-for-bit
reproducible and identical between the rollout and the iLQR forward pass.
"""
import numpy as np
from numba import njit

NX = 6
NZ = 7  # homogenized state: [deviation; 1]
Q_SLOT = 2


@njit(cache=True, nogil=True)
def _advance(A, B, x, u, out):
    for i in range(NX):
        acc = B[i] * u
        for j in range(NX):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True, nogil=True)
def rollout(A, B, x0, u, bound, X):
    """Fill ``X[k] = x_k`` for ``x_{k+1} = A x_k + B u_k``.

    Returns -1 on success or the first step index whose state exceeded ``bound``
    (inf-norm) or became non-finite.
    """
    n = u.shape[0]
    x = x0.copy()
    nxt = np.empty(NX)
    for k in range(n):
        for i in range(NX):
            v = x[i]
            if not np.isfinite(v) or abs(v) > bound:
                return k
            X[k, i] = v
        _advance(A, B, x, u[k], nxt)
        x[:] = nxt
    return -1


@njit(cache=True, nogil=True)
def ilqr_backward(Ah, Bh, X, u, q_ref, R, xi, absolute, K):
    """Riccati sweep on the homogenized system; writes gains into ``K`` (n x 7).

    Stage k carries the tracking block ``Q*_k`` built from the current iterate's
    deviation ``e_k = x_k - x_k_ref``. With ``absolute`` the input cost is
    ``R_k (u_k + du)^2`` (cross term on the constant coordinate); otherwise only
    the increment ``R_k du^2`` is penalized. Returns -1, or the index of a
    non-positive curvature.
    """
    n = u.shape[0]
    V = np.zeros((NZ, NZ))
    Vn = np.zeros((NZ, NZ))
    VB = np.zeros(NZ)
    Kk = np.zeros(NZ)
    N = np.zeros(NZ)
    P = np.zeros((NZ, NZ))
    PV = np.zeros((NZ, NZ))
    for k in range(n - 1, -1, -1):
        for i in range(NZ):
            acc = 0.0
            for j in range(NZ):
                acc += V[i, j] * Bh[j]
            VB[i] = acc
        den = R[k]
        for i in range(NZ):
            den += Bh[i] * VB[i]
        if not den > 0.0:
            return k
        for i in range(NZ):
            N[i] = 0.0
        if absolute:
            N[NZ - 1] = R[k] * u[k]
        for j in range(NZ):
            acc = N[j]
            for i in range(NZ):
                acc += VB[i] * Ah[i, j]
            Kk[j] = acc / den
            K[k, j] = Kk[j]
        # closed loop P = A* - B* K
        for i in range(NZ):
            for j in range(NZ):
                P[i, j] = Ah[i, j] - Bh[i] * Kk[j]
        for i in range(NZ):
            for j in range(NZ):
                acc = 0.0
                for m in range(NZ):
                    acc += P[m, i] * V[m, j]
                PV[i, j] = acc
        for i in range(NZ):
            for j in range(NZ):
                acc = 0.0
                for m in range(NZ):
                    acc += PV[i, m] * P[m, j]
                Vn[i, j] = acc + R[k] * Kk[i] * Kk[j] - N[i] * Kk[j] - Kk[i] * N[j]
        e = X[k, Q_SLOT] - q_ref[k]
        ee = 0.0
        for i in range(NX):
            d = X[k, i]
            if i == Q_SLOT:
                d = e
            ee += d * d
        Vn[Q_SLOT, Q_SLOT] += xi
        Vn[Q_SLOT, NZ - 1] += xi * e
        Vn[NZ - 1, Q_SLOT] += xi * e
        Vn[NZ - 1, NZ - 1] += ee
        if absolute:
            Vn[NZ - 1, NZ - 1] += R[k] * u[k] * u[k]
        for i in range(NZ):
            for j in range(NZ):
                V[i, j] = 0.5 * (Vn[i, j] + Vn[j, i])
    return -1


@njit(cache=True, nogil=True)
def ilqr_forward(A, B, x0, X_prev, u_prev, K, bound, X_new, u_new):
    """Roll out ``u_k = u_prev_k - K_k [x_k - x_prev_k; 1]``; same return code as ``rollout``."""
    n = u_prev.shape[0]
    x = x0.copy()
    nxt = np.empty(NX)
    for k in range(n):
        acc = K[k, NZ - 1]
        for i in range(NX):
            v = x[i]
            if not np.isfinite(v) or abs(v) > bound:
                return k
            X_new[k, i] = v
            acc += K[k, i] * (v - X_prev[k, i])
        uk = u_prev[k] - acc
        u_new[k] = uk
        _advance(A, B, x, uk, nxt)
        x[:] = nxt
    return -1
