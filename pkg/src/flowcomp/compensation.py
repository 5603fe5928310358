"""Open-loop input compensation by iterative LQR.

Given a reference nozzle flow ``q_ref``, find the pump command ``u`` whose
simulated output tracks it. The stage cost is

    b_k = xi * (q_k - q_ref_k)^2 + R_k * u_k^2,   R_k = r1 if u_k < u_th else r2

with a cheaper effort weight once the pump runs backwards past ``u_th``. Each
iteration linearizes around the current trajectory, runs a Riccati sweep on the
homogenized 7-state system ``[x - x_prev; 1]`` and rolls the new input out.

Two readings of the effort term are supported (``IlqrConfig.effort_penalty``):

``"increment"`` (default)
    The sweep penalizes the per-iteration input change ``R_k du_k^2``; the
    iteration drives tracking error down with ``R_k`` acting as a per-sample
    step damping. The reported cost is ``sum xi e_k^2 + R_k du_k^2``, which is
    non-increasing from one iteration to the next.
``"absolute"``
    The sweep penalizes ``R_k (u_k + du_k)^2`` and the iteration minimizes the
    stage cost above exactly; with ``r1 == r2`` it reduces to one affine LQR
    solve.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DivergenceError, InvalidArgumentError, NumericDomainError
from .model import (
    DEFAULT_BOUND,
    N_STATES,
    Q_INDEX,
    FlowProfile,
    StateSpaceModel,
    check_state,
    simulate,
    simulate_states,
    zero_state,
)
from .profiles import pad_profile

logger = logging.getLogger(__name__)

EFFORT_MODES = ("increment", "absolute")


@dataclass(frozen=True)
class IlqrConfig:
    xi: float = 100.0
    r1: float = 40.0
    r2: float = 400.0
    u_th: float = -2.0
    dt: float = 0.0005
    rel_stop: float = 0.001
    max_iters: int = 200
    tail: float = 1.0
    effort_penalty: str = "increment"
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        checks = {
            "xi": self.xi > 0,
            "r1": self.r1 > 0,
            "r2": self.r2 > 0,
            "dt": self.dt > 0,
            "rel_stop": 0 < self.rel_stop < 1,
            "max_iters": self.max_iters >= 1,
            "tail": self.tail >= 0,
            "bound": self.bound > 0,
            "u_th": math.isfinite(self.u_th),
        }
        for name, ok in checks.items():
            if not ok:
                raise InvalidArgumentError(f"invalid {name}={getattr(self, name)!r}", name)
        if self.r1 > self.r2:
            raise InvalidArgumentError("reverse-pumping weight r1 must not exceed r2", "r1")
        if self.effort_penalty not in EFFORT_MODES:
            raise InvalidArgumentError(f"effort_penalty must be one of {EFFORT_MODES}", "effort_penalty")

    def weights(self) -> "TrackingCostWeights":
        return TrackingCostWeights(self.xi, self.r1, self.r2, self.u_th)


@dataclass(frozen=True)
class TrackingCostWeights:
    """``Q = diag(0, 0, xi, 0, 0, 0)`` and the piecewise effort weight."""

    xi: float
    r1: float
    r2: float
    u_th: float

    @property
    def Q(self) -> np.ndarray:
        Q = np.zeros((N_STATES, N_STATES))
        Q[Q_INDEX, Q_INDEX] = self.xi
        return Q

    def R_of_u(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.where(u < self.u_th, self.r1, self.r2)


@dataclass(frozen=True)
class IlqrResult:
    """Solved input, its predicted output and the per-iteration cost.

    ``q_ref`` is the (tail-padded) reference the solver tracked; ``u_opt`` and
    ``q_pred`` share its length and step. ``cost_history[0]`` is the cost of
    the initial guess ``u = q_ref``. ``stage_cost`` is the stage cost (effort
    on ``u`` itself) of the returned trajectory, whichever effort reading was
    solved.
    """

    u_opt: FlowProfile
    q_pred: FlowProfile
    q_ref: FlowProfile
    cost_history: tuple
    iterations: int
    converged: bool
    best_iteration: int = 0
    x_opt: np.ndarray = field(default=None, repr=False)
    stage_cost: float = float("nan")


def _as_samples(p) -> np.ndarray:
    return np.asarray(p.samples if isinstance(p, FlowProfile) else p, dtype=float).reshape(-1)


def tracking_cost(x_traj, u_traj, q_ref, cfg: IlqrConfig, effort_from=None) -> float:
    """``sum_k (x_k - x_ref_k)^T Q (x_k - x_ref_k) + R_k u_k^2``.

    ``R_k`` is classified from ``effort_from`` when given (e.g. the previous
    iterate), otherwise from ``u_traj`` itself.
    """
    X = np.asarray(x_traj, dtype=float)
    u = _as_samples(u_traj)
    r = _as_samples(q_ref)
    if X.ndim != 2 or X.shape[1] != N_STATES:
        raise InvalidArgumentError(f"x_traj must be (n, {N_STATES})", "x_traj")
    if not (X.shape[0] == u.size == r.size):
        raise InvalidArgumentError(f"length mismatch: x {X.shape[0]}, u {u.size}, q_ref {r.size}")
    w = cfg.weights()
    R = w.R_of_u(u if effort_from is None else _as_samples(effort_from))
    e = X[:, Q_INDEX] - r
    return float(np.sum(cfg.xi * e * e) + np.sum(R * u * u))


def _homogenized(model: StateSpaceModel):
    Ah = np.eye(N_STATES + 1)
    Ah[:N_STATES, :N_STATES] = model.A
    Bh = np.zeros(N_STATES + 1)
    Bh[:N_STATES] = model.B
    return Ah, Bh


def backward_pass(model: StateSpaceModel, x_traj, u_traj, q_ref, cfg: IlqrConfig) -> np.ndarray:
    """Gains ``K_k`` (rows of an ``(n, 7)`` array) acting on ``[x_k - x_prev_k; 1]``.

    ``K_k = (R_k + B*^T V_{k+1} B*)^{-1} (B*^T V_{k+1} A* + N_k^T)`` with the
    homogenized ``A*``, ``B*`` and the stage block
    ``Q*_k = [[Q, Q e_k], [e_k^T Q, e_k^T e_k]]``, ``e_k = x_k - x_ref_k``.
    ``N_k`` is zero for the increment penalty and ``[0; R_k u_k]`` for the
    absolute one. The value matrix after the last sample is zero, so the one
    at the last sample is its own stage block ``Q*``.
    """
    X = np.ascontiguousarray(x_traj, dtype=float)
    u = np.ascontiguousarray(_as_samples(u_traj))
    r = np.ascontiguousarray(_as_samples(q_ref))
    if not (X.shape == (u.size, N_STATES) and r.size == u.size):
        raise InvalidArgumentError("x_traj, u_traj and q_ref must have matching lengths")
    R = np.ascontiguousarray(cfg.weights().R_of_u(u))
    Ah, Bh = _homogenized(model)
    K = np.zeros((u.size, N_STATES + 1))
    bad = _kernels.ilqr_backward(Ah, Bh, X, u, r, R, float(cfg.xi), cfg.effort_penalty == "absolute", K)
    if bad >= 0:
        raise NumericDomainError(f"non-positive input curvature at step {bad}")
    return K


def forward_pass(model: StateSpaceModel, x0, u_prev, x_prev, K, bound: float = DEFAULT_BOUND):
    """Roll out ``u_k = u_prev_k - K_k [x_k - x_prev_k; 1]`` from ``x0``.

    Returns ``(u_new, X_new)``; ``u_new`` is a FlowProfile when ``u_prev`` is one.
    """
    u = np.ascontiguousarray(_as_samples(u_prev))
    Xp = np.ascontiguousarray(x_prev, dtype=float)
    K = np.ascontiguousarray(K, dtype=float)
    if Xp.shape != (u.size, N_STATES) or K.shape != (u.size, N_STATES + 1):
        raise InvalidArgumentError("u_prev, x_prev and K must have matching lengths")
    x0 = zero_state() if x0 is None else check_state(x0, "x0")
    u_new = np.empty_like(u)
    X_new = np.empty_like(Xp)
    k = _kernels.ilqr_forward(np.ascontiguousarray(model.A), np.ascontiguousarray(model.B),
                              x0, Xp, u, K, float(bound), X_new, u_new)
    if k >= 0:
        raise DivergenceError(k, bound)
    if isinstance(u_prev, FlowProfile):
        u_new = FlowProfile(u_prev.dt, u_new, "input-u")
    return u_new, X_new


def _iteration_cost(X, u_new, u_prev, r, cfg: IlqrConfig) -> float:
    """Cost recorded for an iterate: stage cost on ``u`` or on the increment ``u - u_prev``."""
    if cfg.effort_penalty == "absolute":
        return tracking_cost(X, u_new, r, cfg)
    return tracking_cost(X, u_new - u_prev, r, cfg, effort_from=u_prev)


def ilqr_solve(model: StateSpaceModel, q_ref: FlowProfile, x0=None, cfg: IlqrConfig | None = None) -> IlqrResult:
    """Compute the compensated input for ``q_ref``.

    The reference is extended by ``cfg.tail`` seconds of zero flow. The
    iteration starts from the naive command ``u = q_ref`` and stops once the
    cost changes by less than ``cfg.rel_stop`` relative to the previous
    iteration (or after ``cfg.max_iters`` passes). The lowest-cost iterate is
    returned.
    """
    cfg = cfg or IlqrConfig(dt=model.dt)
    for name, dt in (("q_ref", q_ref.dt), ("cfg", cfg.dt)):
        if not math.isclose(dt, model.dt, rel_tol=1e-9, abs_tol=0.0):
            raise InvalidArgumentError(f"{name}.dt={dt:g} does not match model dt={model.dt:g}", "dt")
    x0 = zero_state() if x0 is None else check_state(x0, "x0")
    ref = pad_profile(q_ref, cfg.tail)
    r = np.ascontiguousarray(ref.samples)

    u = r.copy()
    X = simulate_states(model, u, x0=x0, bound=cfg.bound)
    # iterate 0 has no increment yet
    cost = _iteration_cost(X, u, u if cfg.effort_penalty == "increment" else None, r, cfg)
    history = [cost]
    best = (cost, u, 0)
    converged = False
    iterations = 0
    while iterations < cfg.max_iters:
        K = backward_pass(model, X, u, r, cfg)
        u_new, X_new = forward_pass(model, x0, u, X, K, bound=cfg.bound)
        iterations += 1
        new_cost = _iteration_cost(X_new, u_new, u, r, cfg)
        history.append(new_cost)
        if new_cost < best[0]:
            best = (new_cost, u_new, iterations)
        prev = cost
        u, X, cost = u_new, X_new, new_cost
        if prev == 0.0 or abs(new_cost - prev) / prev < cfg.rel_stop:
            converged = True
            break
    logger.info("ilqr: %d iterations, cost %.6g -> %.6g, converged=%s", iterations, history[0], best[0], converged)

    u_opt = FlowProfile(ref.dt, best[1], "input-u")
    X_opt = simulate_states(model, u_opt, x0=x0, bound=cfg.bound)
    q_pred = simulate(model, u_opt, x0=x0, bound=cfg.bound)
    return IlqrResult(
        u_opt=u_opt,
        q_pred=q_pred,
        q_ref=ref,
        cost_history=tuple(history),
        iterations=iterations,
        converged=converged,
        best_iteration=best[2],
        x_opt=X_opt,
        stage_cost=tracking_cost(X_opt, u_opt, r, cfg),
    )
