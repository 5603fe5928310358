"""Canonical pulse profiles, zero-order-hold resampling and file formats.

Files handled here:

* profile CSV: header ``time_s,value_mm3_s``, uniformly spaced rows;
* waypoint CSV: header ``x_mm,y_mm,z_mm,q_mm3_s``;
* key=value text (model parameters, pulse specs, solver configs), ``#`` comments.
"""
from __future__ import annotations

import csv
import math
import os
import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, ParseError
from .model import PARAM_NAMES, FlowProfile, ModelParams, _check_dt

PROFILE_HEADER = ("time_s", "value_mm3_s")
WAYPOINT_HEADER = ("x_mm", "y_mm", "z_mm", "q_mm3_s")
SPACING_TOL = 1e-9
_EDGE_TOL = 1e-9


def fmt(value: float) -> str:
    """Canonical decimal rendering used by every writer (12 significant digits)."""
    text = f"{float(value):.12g}"
    return "0" if text == "-0" else text


# -- pulse trains -----------------------------------------------------------


@dataclass(frozen=True)
class PulseSpec:
    """Train of square pulses: ``lead_in`` zeros, then per magnitude a pulse and a gap."""

    magnitudes: tuple
    pulse_width: float
    gap: float = 0.0
    lead_in: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "magnitudes", tuple(float(m) for m in self.magnitudes))
        if not all(math.isfinite(m) for m in self.magnitudes):
            raise InvalidArgumentError("pulse magnitudes must be finite", "magnitudes")
        if not self.pulse_width > 0:
            raise InvalidArgumentError("pulse_width must be > 0", "pulse_width")
        if not self.gap >= 0:
            raise InvalidArgumentError("gap must be >= 0", "gap")
        if not self.lead_in >= 0:
            raise InvalidArgumentError("lead_in must be >= 0", "lead_in")

    @property
    def duration(self) -> float:
        return self.lead_in + len(self.magnitudes) * (self.pulse_width + self.gap)


# Nine extrusion pulses spanning the 2-10 mm^3/s printing range, each followed by
# a retraction pulse at -30 %. Representative of a mixed-sign training input.
TRAINING_PULSES = PulseSpec(
    magnitudes=(2.0, -0.6, 6.0, -1.8, 10.0, -3.0, 4.0, -1.2, 8.0, -2.4,
                3.0, -0.9, 9.0, -2.7, 5.0, -1.5, 7.0, -2.1),
    pulse_width=2.0,
    gap=1.0,
    lead_in=1.0,
)

# Four 2.4 mm^3/s dashes.
VALIDATION_PULSES = PulseSpec(magnitudes=(2.4,) * 4, pulse_width=2.0, gap=2.0, lead_in=0.5)

PRESETS = {"training": TRAINING_PULSES, "validation": VALIDATION_PULSES}


def _first_index_at_or_after(t: float, dt: float) -> int:
    return max(0, math.ceil(t / dt - _EDGE_TOL))


def gen_pulses(spec: PulseSpec, dt: float, label: str = "input-u") -> FlowProfile:
    """Sample a pulse train; sample ``k`` takes the value of the interval holding ``k*dt``."""
    dt = _check_dt(dt)
    n = max(1, int(round(spec.duration / dt)))
    samples = np.zeros(n)
    start = spec.lead_in
    for m in spec.magnitudes:
        a = _first_index_at_or_after(start, dt)
        b = _first_index_at_or_after(start + spec.pulse_width, dt)
        samples[a:min(b, n)] = m
        start += spec.pulse_width + spec.gap
    return FlowProfile(dt, samples, label)


def resample(p: FlowProfile, new_dt: float) -> FlowProfile:
    """Zero-order-hold resampling onto a grid of step ``new_dt`` covering the same duration."""
    new_dt = _check_dt(new_dt, "new_dt")
    if new_dt == p.dt:
        return p
    n_new = max(1, int(round(p.duration / new_dt)))
    idx = np.floor(np.arange(n_new) * new_dt / p.dt + _EDGE_TOL).astype(np.int64)
    np.clip(idx, 0, len(p) - 1, out=idx)
    return FlowProfile(new_dt, p.samples[idx], p.label)


def pad_profile(p: FlowProfile, seconds: float, value: float = 0.0) -> FlowProfile:
    n = int(round(seconds / p.dt))
    if n <= 0:
        return p
    return p.with_samples(np.concatenate([p.samples, np.full(n, float(value))]))


# -- profile CSV ------------------------------------------------------------


def save_profile(p: FlowProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(PROFILE_HEADER) + "\n")
        for t, v in zip(p.times, p.samples):
            fh.write(f"{fmt(t)},{fmt(v)}\n")


def load_profile(path, dt: float | None = None, label: str = "") -> FlowProfile:
    """Read a profile CSV, enforcing uniform spacing within 1e-9 s.

    ``dt`` is required only for single-row files.
    """
    times, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PROFILE_HEADER:
            raise ParseError(f"expected header {','.join(PROFILE_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", path, lineno)
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", path, lineno) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ParseError("non-finite value", path, lineno)
            times.append(t)
            values.append(v)
    if not values:
        raise ParseError("no samples", path)
    t = np.array(times)
    if len(t) == 1:
        if dt is None:
            raise ParseError("single-sample profile needs an explicit dt", path)
    else:
        if dt is None:
            # locate errors against the first gap, take the value from the mean gap
            first = t[1] - t[0]
            bad = np.flatnonzero(np.abs(t - t[0] - np.arange(len(t)) * first) > SPACING_TOL)
            if bad.size:
                raise ParseError(f"non-uniform time spacing (first gap {first:g})", path, int(bad[0]) + 2)
            dt = float(fmt((t[-1] - t[0]) / (len(t) - 1)))
        dev = np.abs(t - t[0] - np.arange(len(t)) * dt)
        bad = np.flatnonzero(dev > SPACING_TOL)
        if bad.size:
            raise ParseError(f"non-uniform time spacing (expected dt={dt:g})", path, int(bad[0]) + 2)
    return FlowProfile(dt, np.array(values), label or os.path.basename(str(path)))


# -- waypoints --------------------------------------------------------------


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    z: float
    q: float

    def __post_init__(self):
        for name in ("x", "y", "z", "q"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidArgumentError(f"waypoint {name} must be finite", name)
            object.__setattr__(self, name, v)


def load_waypoints(path) -> list[Waypoint]:
    wps = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != WAYPOINT_HEADER:
            raise ParseError(f"expected header {','.join(WAYPOINT_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", path, lineno)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", path, lineno) from None
            try:
                wps.append(Waypoint(*vals))
            except InvalidArgumentError as exc:
                raise ParseError(str(exc), path, lineno) from None
    return wps


def save_waypoints(wps: Sequence[Waypoint], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(WAYPOINT_HEADER) + "\n")
        for w in wps:
            fh.write(",".join(fmt(v) for v in (w.x, w.y, w.z, w.q)) + "\n")


def _segment_table(wps: Sequence[Waypoint]):
    if len(wps) < 2:
        raise InvalidArgumentError("need at least 2 waypoints", "waypoints")
    pts = np.array([[w.x, w.y, w.z] for w in wps])
    lengths = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    ends = np.cumsum(lengths)
    return pts, lengths, ends


def waypoints_to_flow(wps: Sequence[Waypoint], speed: float, dt: float) -> FlowProfile:
    """Flow command over time for a constant-speed traverse of the waypoints.

    The segment leaving waypoint ``i`` carries ``wps[i].q`` (held until the next
    waypoint is reached); the final waypoint's ``q`` is not used.
    """
    if not speed > 0:
        raise InvalidArgumentError("speed must be > 0", "speed")
    dt = _check_dt(dt)
    _, _, ends = _segment_table(wps)
    total = ends[-1]
    n = max(1, int(round(total / speed / dt)))
    s = np.arange(n) * dt * speed
    seg = np.searchsorted(ends, s + _EDGE_TOL * speed * dt, side="right")
    np.clip(seg, 0, len(wps) - 2, out=seg)
    q = np.array([w.q for w in wps[:-1]])[seg]
    return FlowProfile(dt, q, "waypoint-q")


def waypoints_to_path(wps: Sequence[Waypoint], speed: float, dt: float) -> np.ndarray:
    """Planar (x, y) nozzle position at each sample time of :func:`waypoints_to_flow`."""
    pts, lengths, ends = _segment_table(wps)
    n = max(1, int(round(ends[-1] / speed / dt)))
    s = np.arange(n) * dt * speed
    starts = ends - lengths
    seg = np.clip(np.searchsorted(ends, s, side="right"), 0, len(wps) - 2)
    frac = np.divide(s - starts[seg], lengths[seg], out=np.zeros(n), where=lengths[seg] > 0)
    xyz = pts[seg] + (pts[seg + 1] - pts[seg]) * frac[:, None]
    return xyz[:, :2]


def straight_path(n: int, step_mm: float, origin=(0.0, 0.0)) -> np.ndarray:
    """``n`` planar samples along +x spaced ``step_mm`` apart."""
    path = np.zeros((n, 2))
    path[:, 0] = origin[0] + np.arange(n) * step_mm
    path[:, 1] = origin[1]
    return path


# -- key=value files --------------------------------------------------------


def parse_keyvalue(path) -> dict:
    """Parse ``key = value`` lines. Values stay strings; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", path, lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ParseError("empty key", path, lineno)
            if key in out:
                raise ParseError(f"duplicate key {key!r}", path, lineno)
            out[key] = (value.strip("\"'"), lineno)
    return out


def _to_float(key, value, path, lineno):
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{key}: expected a number, got {value!r}", path, lineno) from None


def coerce_config(cls, path, overrides: dict | None = None):
    """Build dataclass ``cls`` from a key=value file; unknown keys are an error."""
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    if path is not None:
        for key, (value, lineno) in parse_keyvalue(path).items():
            if key not in known:
                raise ParseError(f"unknown key {key!r} (allowed: {', '.join(known)})", path, lineno)
            default = known[key].default
            if isinstance(default, bool):
                kwargs[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                kwargs[key] = int(_to_float(key, value, path, lineno))
            elif isinstance(default, float):
                kwargs[key] = _to_float(key, value, path, lineno)
            else:
                kwargs[key] = value
    kwargs.update(overrides or {})
    return cls(**kwargs)


def load_params(path) -> ModelParams:
    entries = parse_keyvalue(path)
    missing = [k for k in PARAM_NAMES if k not in entries]
    extra = [k for k in entries if k not in PARAM_NAMES]
    if missing or extra:
        raise ParseError(f"parameter file needs exactly {','.join(PARAM_NAMES)}; "
                         f"missing {missing}, unexpected {extra}", path)
    vals = {k: _to_float(k, entries[k][0], path, entries[k][1]) for k in PARAM_NAMES}
    try:
        return ModelParams(**vals)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path, entries[exc.field][1] if exc.field else None) from None


def save_params(params: ModelParams, path) -> None:
    with open(path, "w") as fh:
        for name, value in params.as_dict().items():
            fh.write(f"{name}={fmt(value)}\n")


def load_pulse_spec(path) -> PulseSpec:
    entries = parse_keyvalue(path)
    allowed = {"magnitudes", "pulse_width", "gap", "lead_in"}
    for key, (_, lineno) in entries.items():
        if key not in allowed:
            raise ParseError(f"unknown key {key!r}", path, lineno)
    if "magnitudes" not in entries or "pulse_width" not in entries:
        raise ParseError("pulse spec needs magnitudes and pulse_width", path)
    text, lineno = entries["magnitudes"]
    mags = [_to_float("magnitudes", m.strip(), path, lineno) for m in text.split(",") if m.strip()]
    kw = {k: _to_float(k, v, path, ln) for k, (v, ln) in entries.items() if k != "magnitudes"}
    try:
        return PulseSpec(magnitudes=tuple(mags), **kw)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path) from None


def save_pulse_spec(spec: PulseSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write("magnitudes = " + ", ".join(fmt(m) for m in spec.magnitudes) + "\n")
        fh.write(f"pulse_width = {fmt(spec.pulse_width)}\n")
        fh.write(f"gap = {fmt(spec.gap)}\n")
        fh.write(f"lead_in = {fmt(spec.lead_in)}\n")
