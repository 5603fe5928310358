"""Independent reference implementations used only by the tests.

None of these call into the package's simulation or solver code; they build
everything from the continuous-time coefficients.
"""
import numpy as np


def continuous(p):
    """Continuous dynamics written out from the equations of motion."""
    k1, c1, m1, mf, k2, c2, m2 = p
    A = np.array([
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 1],
        [-k1 / m1, 0, 0, -c1 / m1, 0, c1 / m1],
        [0, -k2 / m2, 0, 0, -c2 / m2, c2 / m2],
        [0, 0, 0, c1 / mf, c2 / mf, -(c1 + c2) / mf],
    ], dtype=float)
    B = np.array([0, 0, 0, k1 / m1, 0, 0], dtype=float)
    return A, B


def euler(p, dt):
    A, B = continuous(p)
    return np.eye(6) + A * dt, B * dt


def rk4_propagator(A, B, h):
    """One classical RK4 step of ``x' = A x + B u`` with ``u`` held constant: ``x+ = M x + N u``."""
    n = A.shape[0]
    M = np.zeros((n, n))
    N = np.zeros(n)
    for j in range(n + 1):
        x = np.zeros(n)
        u = 0.0
        if j < n:
            x[j] = 1.0
        else:
            u = 1.0
        k1 = A @ x + B * u
        k2 = A @ (x + 0.5 * h * k1) + B * u
        k3 = A @ (x + 0.5 * h * k2) + B * u
        k4 = A @ (x + h * k3) + B * u
        out = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if j < n:
            M[:, j] = out
        else:
            N = out
    return M, N


def rk4_output(p, u, dt, substeps):
    """Nozzle flow at the sample instants, integrating with RK4 at ``dt / substeps``.

    Each input sample is held over its interval; composing ``substeps`` fine
    steps is exactly the fine-step RK4 rollout for a piecewise-constant input.
    """
    A, B = continuous(p)
    M, N = rk4_propagator(A, B, dt / substeps)
    Mc = np.linalg.matrix_power(M, substeps)
    Nc = np.zeros(6)
    for _ in range(substeps):
        Nc = M @ Nc + N
    x = np.zeros(6)
    q = np.empty(len(u))
    for k, uk in enumerate(u):
        q[k] = x[2]
        x = Mc @ x + Nc * uk
    return q


def euler_output(p, u, dt):
    A, B = euler(p, dt)
    x = np.zeros(6)
    q = np.empty(len(u))
    for k, uk in enumerate(u):
        q[k] = x[2]
        x = A @ x + B * uk
    return q


def affine_lqr_tracking(p, dt, q_ref, xi, r):
    """Optimal input for ``sum_k xi (q_k - q_ref_k)^2 + r u_k^2`` from rest.

    Classic time-varying tracking recursion with value function
    ``x^T P x - 2 s^T x + const``; ``P`` and ``s`` vanish after the last sample.
    """
    A, B = euler(p, dt)
    n = len(q_ref)
    c = np.zeros(6)
    c[2] = 1.0
    Q = xi * np.outer(c, c)
    P = np.zeros((6, 6))
    s = np.zeros(6)
    L = np.zeros((n, 6))
    f = np.zeros(n)
    for k in range(n - 1, -1, -1):
        # u_k = -L_k x_k + f_k minimizes r u^2 + (A x + B u)^T P (A x + B u) - 2 s^T (A x + B u)
        den = r + B @ P @ B
        L[k] = (B @ P @ A) / den
        f[k] = (B @ s) / den
        Acl = A - np.outer(B, L[k])
        s_new = Acl.T @ s + xi * q_ref[k] * c
        P_new = Q + r * np.outer(L[k], L[k]) + Acl.T @ P @ Acl
        # cross terms from the feedforward cancel at the optimum
        P, s = 0.5 * (P_new + P_new.T), s_new
    x = np.zeros(6)
    u = np.empty(n)
    for k in range(n):
        u[k] = -L[k] @ x + f[k]
        x = A @ x + B * u[k]
    return u


def batch_lqr_tracking(p, dt, q_ref, xi, r):
    """Same optimum as :func:`affine_lqr_tracking`, by dense least squares on the impulse response."""
    A, B = euler(p, dt)
    n = len(q_ref)
    h = np.zeros(n)
    x = B.copy()
    for i in range(1, n):
        h[i] = x[2]
        x = A @ x
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    G = np.where(idx > 0, h[np.clip(idx, 0, n - 1)], 0.0)
    H = xi * G.T @ G + r * np.eye(n)
    return np.linalg.solve(H, xi * G.T @ np.asarray(q_ref, float))


def forward_difference(f, phi, rel=1e-7):
    phi = np.asarray(phi, float)
    f0 = f(phi)
    g = np.empty(phi.size)
    for i in range(phi.size):
        step = rel * abs(phi[i])
        e = phi.copy()
        e[i] += step
        g[i] = (f(e) - f0) / step
    return g


def iou_reference(a, b):
    a = np.asarray(a, bool)
    b = np.asarray(b, bool)
    inter = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x and y)
    union = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x or y)
    return 1.0 if union == 0 else inter / union
