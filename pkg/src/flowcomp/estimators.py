"""scikit-learn style wrappers around calibration and compensation.

Time series are passed as single-column arrays ``(n_samples, 1)`` (1-D input
is accepted and reshaped); rows are consecutive samples on a uniform grid.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .calibration import CalibrationConfig, calibrate
from .compensation import IlqrConfig, ilqr_solve
from .errors import InvalidArgumentError
from .model import REFERENCE_PARAMS, FlowProfile, ModelParams, build_state_space, simulate


def as_series(X, name: str = "X") -> np.ndarray:
    """Validate a single-column time series and return it as a 1-D float array."""
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr = check_array(arr, dtype=float, ensure_all_finite=True, input_name=name)
    if arr.shape[1] != 1:
        raise InvalidArgumentError(f"{name} must have exactly one column, got {arr.shape[1]}", name)
    return arr[:, 0]


def _as_params(params) -> ModelParams:
    if params is None:
        return REFERENCE_PARAMS
    if isinstance(params, ModelParams):
        return params
    if isinstance(params, dict):
        return ModelParams(**params)
    return ModelParams.from_vector(params)


class LumpedFlowModel(RegressorMixin, BaseEstimator):
    """Lumped flow model as a regressor from pump command ``u`` to nozzle flow ``q``.

    ``fit`` identifies the coefficients from measured data starting at
    ``init_params``; ``predict`` simulates from rest.
    """

    def __init__(self, dt=0.01, init_params=None, h=0.1, q_b=0.1, rel_stop=0.001, max_iters=10000):
        self.dt = dt
        self.init_params = init_params
        self.h = h
        self.q_b = q_b
        self.rel_stop = rel_stop
        self.max_iters = max_iters

    @classmethod
    def from_params(cls, params, dt=0.01) -> "LumpedFlowModel":
        """A ready-to-predict estimator with fixed coefficients (no fitting)."""
        est = cls(dt=dt, init_params=params)
        est.params_ = _as_params(params)
        est.record_ = None
        est.n_features_in_ = 1
        return est

    def fit(self, X, y):
        u = as_series(X, "X")
        q = as_series(y, "y")
        if u.size != q.size:
            raise InvalidArgumentError(f"X and y lengths differ ({u.size} vs {q.size})", "y")
        cfg = CalibrationConfig(h=self.h, q_b=self.q_b, dt=self.dt, rel_stop=self.rel_stop, max_iters=self.max_iters)
        self.record_ = calibrate(FlowProfile(self.dt, u), FlowProfile(self.dt, q), _as_params(self.init_params), cfg)
        self.params_ = self.record_.params
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        u = as_series(X, "X")
        return simulate(build_state_space(self.params_, self.dt), u).samples.copy()


class IlqrCompensator(TransformerMixin, BaseEstimator):
    """Maps a desired flow ``q_ref`` to the compensated pump command.

    ``fit`` runs the solver on the reference and keeps the full
    :class:`~flowcomp.compensation.IlqrResult` in ``result_`` (including the
    zero-flow tail). ``transform`` returns the command over the input's own
    samples, shape ``(n, 1)``; the tail is only available through ``result_``.
    """

    def __init__(self, params=None, dt=0.0005, xi=100.0, r1=40.0, r2=400.0, u_th=-2.0,
                 rel_stop=0.001, max_iters=200, tail=1.0, effort_penalty="increment"):
        self.params = params
        self.dt = dt
        self.xi = xi
        self.r1 = r1
        self.r2 = r2
        self.u_th = u_th
        self.rel_stop = rel_stop
        self.max_iters = max_iters
        self.tail = tail
        self.effort_penalty = effort_penalty

    def _config(self) -> IlqrConfig:
        return IlqrConfig(xi=self.xi, r1=self.r1, r2=self.r2, u_th=self.u_th, dt=self.dt,
                          rel_stop=self.rel_stop, max_iters=self.max_iters, tail=self.tail,
                          effort_penalty=self.effort_penalty)

    def _solve(self, q_ref: np.ndarray):
        model = build_state_space(_as_params(self.params), self.dt)
        return ilqr_solve(model, FlowProfile(self.dt, q_ref), cfg=self._config())

    def fit(self, X, y=None):
        q_ref = as_series(X, "X")
        self.result_ = self._solve(q_ref)
        self.reference_ = q_ref
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "result_")
        q_ref = as_series(X, "X")
        if q_ref.shape == self.reference_.shape and np.array_equal(q_ref, self.reference_):
            result = self.result_
        else:
            result = self._solve(q_ref)
        return result.u_opt.samples[: q_ref.size].reshape(-1, 1).copy()
