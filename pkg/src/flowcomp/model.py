"""Lumped-parameter pump/mixer/nozzle flow model.

The dispensing system is reduced to three coupled mass-spring-damper degrees of
freedom: the pump stage (``x1``), the mixer stage (``x2``) and the nozzle flow
coordinate (``q``). The state is ordered ``[x1, x2, q, dx1, dx2, dq]`` and is
advanced with a forward-Euler discretization ``A = I + A_s dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import DivergenceError, InvalidArgumentError, NumericDomainError

PARAM_NAMES = ("k1", "c1", "m1", "mf", "k2", "c2", "m2")
STATE_LABELS = ("x1", "x2", "q", "dx1", "dx2", "dq")
N_STATES = 6
Q_INDEX = 2
DEFAULT_BOUND = 1e9


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """The seven physical coefficients, all strictly positive.

    ``k*`` are stiffnesses, ``c*`` dampings and ``m*`` inertias of the pump
    stage (1), the mixer stage (2) and the fluid between them (``mf``).
    """

    k1: float
    c1: float
    m1: float
    mf: float
    k2: float
    c2: float
    m2: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidArgumentError(f"{f.name} must be a number, got {value!r}", f.name) from None
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidArgumentError(f"{f.name} must be finite and > 0, got {value!r}", f.name)
            object.__setattr__(self, f.name, value)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, values: Iterable[float]) -> "ModelParams":
        values = [float(v) for v in values]
        if len(values) != len(PARAM_NAMES):
            raise InvalidArgumentError(f"expected {len(PARAM_NAMES)} parameters, got {len(values)}")
        return cls(*values)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}


#: Coefficients identified on the physical silicone dispenser.
REFERENCE_PARAMS = ModelParams(k1=0.827, c1=18.784, m1=1.195, mf=1.930, k2=9.930, c2=5.458, m2=0.954)


def _check_dt(dt, name="dt") -> float:
    try:
        dt = float(dt)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a number, got {dt!r}", name) from None
    if not math.isfinite(dt) or dt <= 0.0:
        raise InvalidArgumentError(f"{name} must be finite and > 0, got {dt!r}", name)
    return dt


@dataclass(frozen=True)
class FlowProfile:
    """Uniformly sampled scalar trajectory (mm^3/s)."""

    dt: float
    samples: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dt", _check_dt(self.dt))
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if samples.size < 1:
            raise InvalidArgumentError("a profile needs at least one sample", "samples")
        if not np.all(np.isfinite(samples)):
            raise NumericDomainError("profile samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    def with_samples(self, samples, label=None) -> "FlowProfile":
        return FlowProfile(self.dt, samples, self.label if label is None else label)


def continuous_matrices(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time ``(A_s, B_s)`` with ``dx/dt = A_s x + B_s u``."""
    k1, c1, m1, mf, k2, c2, m2 = params.to_vector()
    As = np.zeros((N_STATES, N_STATES))
    As[0, 3] = As[1, 4] = As[2, 5] = 1.0
    As[3, 0] = -k1 / m1
    As[3, 3] = -c1 / m1
    As[3, 5] = c1 / m1
    As[4, 1] = -k2 / m2
    As[4, 4] = -c2 / m2
    As[4, 5] = c2 / m2
    As[5, 3] = c1 / mf
    As[5, 4] = c2 / mf
    As[5, 5] = -(c1 + c2) / mf
    Bs = np.zeros(N_STATES)
    Bs[3] = k1 / m1
    return As, Bs


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete model ``x_{k+1} = A x_k + B u_k``, ``q_k = C x_k``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float
    params: ModelParams = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen_array(self.A))
        object.__setattr__(self, "B", _frozen_array(self.B).reshape(-1))
        object.__setattr__(self, "C", _frozen_array(self.C).reshape(-1))
        object.__setattr__(self, "dt", _check_dt(self.dt))
        if self.A.shape != (N_STATES, N_STATES) or self.B.shape != (N_STATES,) or self.C.shape != (N_STATES,):
            raise InvalidArgumentError("A must be 6x6, B and C length 6")


def build_state_space(params: ModelParams, dt: float) -> StateSpaceModel:
    """Forward-Euler discretization of the lumped model at step ``dt``."""
    if not isinstance(params, ModelParams):
        params = ModelParams.from_vector(params)
    dt = _check_dt(dt)
    As, Bs = continuous_matrices(params)
    C = np.zeros(N_STATES)
    C[Q_INDEX] = 1.0
    return StateSpaceModel(A=np.eye(N_STATES) + As * dt, B=Bs * dt, C=C, dt=dt, params=params)


def zero_state() -> np.ndarray:
    return np.zeros(N_STATES)


def check_state(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (N_STATES,):
        raise InvalidArgumentError(f"{name} must have {N_STATES} entries {STATE_LABELS}, got shape {x.shape}", name)
    if not np.all(np.isfinite(x)):
        raise NumericDomainError(f"{name} must be finite")
    return x


def step(model: StateSpaceModel, x, u: float) -> np.ndarray:
    """One step of the dynamics: ``A x + B u``."""
    x = check_state(x)
    u = float(u)
    if not math.isfinite(u):
        raise NumericDomainError("input u must be finite")
    return model.A @ x + model.B * u


def _as_input(model: StateSpaceModel, u) -> np.ndarray:
    if isinstance(u, FlowProfile):
        if not math.isclose(u.dt, model.dt, rel_tol=1e-9, abs_tol=0.0):
            raise InvalidArgumentError(f"profile dt {u.dt:g} does not match model dt {model.dt:g}", "dt")
        return np.ascontiguousarray(u.samples, dtype=float)
    u = np.ascontiguousarray(u, dtype=float).reshape(-1)
    if not np.all(np.isfinite(u)):
        raise NumericDomainError("input samples must be finite")
    return u


def simulate_states(model: StateSpaceModel, u, x0=None, bound: float = DEFAULT_BOUND) -> np.ndarray:
    """State trajectory ``X`` with ``X[k] = x_k`` (so ``X[0] = x0``), shape ``(n, 6)``.

    Raises :class:`DivergenceError` when ``max|x_k|`` exceeds ``bound``.
    """
    u = _as_input(model, u)
    x0 = zero_state() if x0 is None else check_state(x0, "x0")
    X = np.empty((u.size, N_STATES))
    k = _kernels.rollout(np.ascontiguousarray(model.A), np.ascontiguousarray(model.B), x0, u, float(bound), X)
    if k >= 0:
        raise DivergenceError(k, bound)
    return X


def simulate(model: StateSpaceModel, u, x0=None, bound: float = DEFAULT_BOUND) -> FlowProfile:
    """Nozzle flow ``q_k = C x_k`` produced by the input trajectory ``u``.

    Parameters
    ----------
    model : StateSpaceModel
    u : FlowProfile or array-like
        Input command; a profile must share ``model.dt``.
    x0 : array-like, optional
        Initial state, defaults to rest.
    bound : float
        Divergence guard on ``max|x_k|``.
    """
    X = simulate_states(model, u, x0=x0, bound=bound)
    return FlowProfile(model.dt, X @ model.C, label="output-q")

