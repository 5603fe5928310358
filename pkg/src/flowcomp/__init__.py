"""Flow-rate compensation for pump-driven extrusion printing."""

__version__ = "0.1.0"

from .calibration import CalibrationConfig, CalibrationRecord, calibrate, cost_gradient, model_cost
from .compensation import IlqrConfig, IlqrResult, ilqr_solve, tracking_cost
from .errors import (
    DivergenceError,
    FlowcompError,
    InvalidArgumentError,
    InvalidDataError,
    NumericDomainError,
    ParseError,
)
from .estimators import IlqrCompensator, LumpedFlowModel
from .measurement import BeadMask, BeadProfile, bead_from_flow, flow_from_bead, iou, rasterize_bead, rmse, segment_saturation
from .model import REFERENCE_PARAMS, FlowProfile, ModelParams, StateSpaceModel, build_state_space, simulate, step
from .profiles import PulseSpec, Waypoint, gen_pulses, load_profile, resample, save_profile

__all__ = [
    "BeadMask", "BeadProfile", "CalibrationConfig", "CalibrationRecord", "DivergenceError", "FlowProfile",
    "FlowcompError", "IlqrCompensator", "IlqrConfig", "IlqrResult", "InvalidArgumentError", "InvalidDataError",
    "LumpedFlowModel", "ModelParams", "NumericDomainError", "ParseError", "PulseSpec", "REFERENCE_PARAMS",
    "StateSpaceModel", "Waypoint", "bead_from_flow", "build_state_space", "calibrate", "cost_gradient",
    "flow_from_bead", "gen_pulses", "ilqr_solve", "iou", "load_profile", "model_cost", "rasterize_bead",
    "resample", "rmse", "save_profile", "segment_saturation", "simulate", "step", "tracking_cost",
]
