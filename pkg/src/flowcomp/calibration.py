"""Gradient-descent identification of the seven model coefficients.

The fit minimizes a flow-weighted squared error

    c(phi) = sum_k (q_model_k(phi) - q_meas_k)^2 / (q_meas_k + q_b)

where ``q_b`` keeps the weight finite at zero flow and favours accuracy at low
flow rates. Each iteration takes the normalized step
``phi <- phi - (h / c(phi)) * grad c(phi)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FlowcompError, InvalidArgumentError, InvalidDataError
from .model import FlowProfile, ModelParams, build_state_space, simulate

logger = logging.getLogger(__name__)

MAX_HALVINGS = 60


@dataclass(frozen=True)
class CalibrationConfig:
    h: float = 0.1
    q_b: float = 0.1
    dt: float = 0.01
    rel_stop: float = 0.001
    max_iters: int = 10000
    fd_eps: float = 1e-6
    param_floor: float = 1e-6
    # exact-fit threshold, relative to the cost of predicting zero flow
    exact_fit_rtol: float = 1e-20

    def __post_init__(self):
        checks = {
            "h": self.h > 0,
            "q_b": self.q_b > 0,
            "dt": self.dt > 0,
            "rel_stop": 0 < self.rel_stop < 1,
            "max_iters": self.max_iters >= 1,
            "fd_eps": self.fd_eps > 0,
            "param_floor": self.param_floor > 0,
            "exact_fit_rtol": self.exact_fit_rtol >= 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise InvalidArgumentError(f"invalid {name}={getattr(self, name)!r}", name)


@dataclass(frozen=True)
class CalibrationRecord:
    """Outcome of :func:`calibrate`.

    ``cost_history[i]`` is the cost of iterate ``i`` (``i = 0`` is the initial
    guess), so ``iterations == len(cost_history)``. ``params`` is the
    lowest-cost iterate; ``final_params`` the last one.
    """

    params: ModelParams
    cost_history: tuple
    iterations: int
    converged: bool
    final_params: ModelParams = field(repr=False)
    best_iteration: int = 0

    @property
    def initial_cost(self) -> float:
        return self.cost_history[0]

    @property
    def final_cost(self) -> float:
        return self.cost_history[self.best_iteration]


class CalibrationError(FlowcompError):
    pass


def _validate_data(u_meas: FlowProfile, q_meas: FlowProfile, cfg: CalibrationConfig):
    if len(u_meas) != len(q_meas):
        raise InvalidArgumentError(f"u and q lengths differ ({len(u_meas)} vs {len(q_meas)})", "q_meas")
    for name, p in (("u_meas", u_meas), ("q_meas", q_meas)):
        if not math.isclose(p.dt, cfg.dt, rel_tol=1e-9, abs_tol=0.0):
            raise InvalidArgumentError(f"{name}.dt={p.dt:g} differs from calibration dt={cfg.dt:g}; resample first", name)
    denom = q_meas.samples + cfg.q_b
    bad = np.flatnonzero(denom <= 0)
    if bad.size:
        k = int(bad[0])
        raise InvalidDataError(f"q_meas[{k}] + q_b = {denom[k]:g} <= 0", index=k)
    return 1.0 / denom


def _cost_with_weights(phi, u, q_meas, weights, dt):
    q_model = simulate(build_state_space(ModelParams.from_vector(phi), dt), u).samples
    r = q_model - q_meas
    return float(np.sum(weights * r * r))


def model_cost(params: ModelParams, u_meas: FlowProfile, q_meas: FlowProfile, cfg: CalibrationConfig) -> float:
    """Weighted squared error between the simulated and measured flow."""
    w = _validate_data(u_meas, q_meas, cfg)
    phi = params.to_vector() if isinstance(params, ModelParams) else np.asarray(params, float)
    return _cost_with_weights(phi, u_meas.samples, q_meas.samples, w, cfg.dt)


def _gradient(phi, u, q, w, cfg) -> np.ndarray:
    grad = np.empty(phi.size)
    for i in range(phi.size):
        step_i = cfg.fd_eps * max(abs(phi[i]), 1.0)
        up = phi.copy()
        up[i] += step_i
        c_up = _cost_with_weights(up, u, q, w, cfg.dt)
        if phi[i] - step_i > 0:
            dn = phi.copy()
            dn[i] -= step_i
            grad[i] = (c_up - _cost_with_weights(dn, u, q, w, cfg.dt)) / (2.0 * step_i)
        else:
            # parameter sits at the floor: one-sided
            grad[i] = (c_up - _cost_with_weights(phi, u, q, w, cfg.dt)) / step_i
    return grad


def cost_gradient(params: ModelParams, u_meas: FlowProfile, q_meas: FlowProfile, cfg: CalibrationConfig) -> np.ndarray:
    """Central finite-difference gradient of :func:`model_cost`.

    Component ``i`` is perturbed by ``fd_eps * max(|phi_i|, 1)``. A component
    whose lower probe would be non-positive falls back to a forward difference.
    """
    w = _validate_data(u_meas, q_meas, cfg)
    phi = params.to_vector() if isinstance(params, ModelParams) else np.asarray(params, float)
    return _gradient(phi, u_meas.samples, q_meas.samples, w, cfg)


def update_step(phi, cost: float, grad, h: float, floor: float) -> np.ndarray:
    """``phi - (h / cost) * grad``, clamped to ``floor``."""
    phi = np.asarray(phi, dtype=float)
    return np.maximum(phi - (h / cost) * np.asarray(grad, dtype=float), floor)


def calibrate(u_meas: FlowProfile, q_meas: FlowProfile, init: ModelParams,
              cfg: CalibrationConfig | None = None) -> CalibrationRecord:
    """Fit model coefficients to measured ``(u, q)`` data.

    Stops when the relative cost change between consecutive iterates drops
    below ``cfg.rel_stop``, when the cost falls to roundoff level
    (``cfg.exact_fit_rtol`` times the cost of a zero prediction), or after
    ``cfg.max_iters`` evaluated iterates. A trial point whose simulation
    diverges is rejected and the increment halved for that iteration only.
    """
    cfg = cfg or CalibrationConfig()
    w = _validate_data(u_meas, q_meas, cfg)
    u, q = u_meas.samples, q_meas.samples
    phi = init.to_vector() if isinstance(init, ModelParams) else np.asarray(init, float)
    c = _cost_with_weights(phi, u, q, w, cfg.dt)
    exact = cfg.exact_fit_rtol * float(np.sum(w * q * q))
    history = [c]
    best_phi, best_i = phi, 0
    converged = c <= exact
    while not converged and len(history) < cfg.max_iters:
        g = _gradient(phi, u, q, w, cfg)
        h = cfg.h
        for _ in range(MAX_HALVINGS):
            trial = update_step(phi, c, g, h, cfg.param_floor)
            try:
                c_new = _cost_with_weights(trial, u, q, w, cfg.dt)
                break
            except DivergenceError:
                h *= 0.5
        else:
            raise CalibrationError(f"no non-divergent step after {MAX_HALVINGS} halvings at iteration {len(history)}")
        if h != cfg.h:
            logger.debug("iteration %d: increment reduced to %g", len(history), h)
        history.append(c_new)
        phi = trial
        if c_new < history[best_i]:
            best_phi, best_i = phi, len(history) - 1
        if c_new <= exact or abs(c_new - c) / c < cfg.rel_stop:
            converged = True
        c = c_new
    logger.info("calibration: %d iterates, cost %.6g -> %.6g, converged=%s",
                len(history), history[0], history[best_i], converged)
    return CalibrationRecord(
        params=ModelParams.from_vector(best_phi),
        cost_history=tuple(history),
        iterations=len(history),
        converged=converged,
        final_params=ModelParams.from_vector(phi),
        best_iteration=best_i,
    )
