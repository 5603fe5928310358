"""Command-line interface: ``flowcomp [--out-dir D] [--manifest F] [--quiet] <command> ...``.

Exit codes: 0 on success, 2 on bad arguments or unreadable input files,
1 on numeric failure (divergence, failed calibration). Every run writes a
JSON manifest next to its outputs.
"""
from __future__ import annotations

import dataclasses
import datetime
import functools
import json
import logging
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .calibration import CalibrationConfig, CalibrationError, calibrate
from .compensation import EFFORT_MODES, IlqrConfig, ilqr_solve
from .errors import DivergenceError, InvalidArgumentError, InvalidDataError, NumericDomainError, ParseError
from .measurement import (
    VIEWS,
    bead_from_flow,
    compose_photo,
    default_extent,
    iou,
    rasterize_bead,
    read_pgm,
    rmse,
    write_pgm,
    write_ppm,
)
from .model import REFERENCE_PARAMS, ModelParams, build_state_space, simulate
from .profiles import (
    PRESETS,
    coerce_config,
    fmt,
    gen_pulses,
    load_params,
    load_profile,
    load_pulse_spec,
    load_waypoints,
    resample,
    save_params,
    save_profile,
    straight_path,
    waypoints_to_flow,
    waypoints_to_path,
)
from .svg import save_line_plot

logger = logging.getLogger("flowcomp")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

_USAGE_ERRORS = (InvalidArgumentError, InvalidDataError, ParseError, OSError)
_NUMERIC_ERRORS = (NumericDomainError, DivergenceError, CalibrationError, ArithmeticError)

EXISTING_FILE = click.Path(exists=True, dir_okay=False, readable=True)


class Run:
    """Per-invocation state: output directory and the manifest being built."""

    def __init__(self, out_dir, manifest, quiet):
        self.out_dir = out_dir
        self.manifest_path = manifest
        self.quiet = quiet
        self.config = {}
        self.inputs = {}
        self.outputs = {}

    def out(self, name) -> str:
        path = os.path.join(self.out_dir, name)
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return path

    def write_manifest(self, command, status, started, duration):
        path = self.manifest_path or self.out(f"{command}.manifest.json")
        doc = {
            "subcommand": command,
            "tool_version": __version__,
            "status": status,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": started,
            "duration_s": duration,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {k: _plain(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def command(name):
    """Register a subcommand with uniform error mapping and manifest writing."""

    def wrap(fn):
        @cli.command(name, help=fn.__doc__)
        @click.pass_obj
        @functools.wraps(fn)
        def runner(run: Run, **kwargs):
            started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
            t0 = time.perf_counter()
            status, code = "ok", EXIT_OK
            try:
                fn(run, **kwargs)
            except _USAGE_ERRORS as exc:
                status, code = f"error: {exc}", EXIT_USAGE
            except _NUMERIC_ERRORS as exc:
                status, code = f"numeric failure: {exc}", EXIT_NUMERIC
            if code != EXIT_OK:
                click.echo(f"flowcomp {name}: {status}", err=True)
            try:
                run.write_manifest(name, status, started, round(time.perf_counter() - t0, 6))
            except OSError as exc:
                click.echo(f"flowcomp {name}: cannot write manifest: {exc}", err=True)
                code = code or EXIT_USAGE
            sys.exit(code)

        return runner

    return wrap


@click.group()
@click.version_option(__version__, prog_name="flowcomp")
@click.option("--out-dir", default=".", show_default=True, type=click.Path(file_okay=False),
              help="Directory for relative output paths and the manifest.")
@click.option("--manifest", default=None, type=click.Path(dir_okay=False),
              help="Manifest path (default: <out-dir>/<command>.manifest.json).")
@click.option("--quiet", is_flag=True, help="Only print results and errors.")
@click.pass_context
def cli(ctx, out_dir, manifest, quiet):
    """Flow-rate compensation toolkit for pump-driven extrusion."""
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    os.makedirs(out_dir, exist_ok=True)
    ctx.obj = Run(out_dir, manifest, quiet)


def _params(run: Run, path) -> ModelParams:
    if path is None:
        params = REFERENCE_PARAMS
    else:
        params = load_params(path)
        run.inputs["params"] = path
    run.config["params"] = params.as_dict()
    return params


def _save(run: Run, key, profile, name):
    path = run.out(name)
    save_profile(profile, path)
    run.outputs[key] = path


def _info(run: Run, message):
    if not run.quiet:
        click.echo(message, err=True)


def _overrides(**values) -> dict:
    return {k: v for k, v in values.items() if v is not None}


def _write_history(run: Run, key, name, costs):
    path = run.out(name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,cost\n")
        for i, c in enumerate(costs):
            fh.write(f"{i},{fmt(c)}\n")
    run.outputs[key] = path


def _plot(run: Run, key, path, series, **kwargs):
    if path:
        out = run.out(path)
        save_line_plot(out, series, **kwargs)
        run.outputs[key] = out


@command("gen-profile")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Built-in pulse train.")
@click.option("--spec", type=EXISTING_FILE, default=None, help="Pulse-spec key=value file.")
@click.option("--waypoints", type=EXISTING_FILE, default=None, help="Waypoint CSV (x_mm,y_mm,z_mm,q_mm3_s).")
@click.option("--speed", type=float, default=None, help="Nozzle speed for --waypoints [mm/s].")
@click.option("--dt", type=float, default=0.01, show_default=True, help="Sample step [s].")
@click.option("--out", default="profile.csv", show_default=True, help="Output profile CSV.")
def cmd_gen_profile(run: Run, preset, spec, waypoints, speed, dt, out):
    """Generate a pulse train (preset or pulse-spec file) or the flow profile of a waypoint path."""
    if sum(x is not None for x in (preset, spec, waypoints)) != 1:
        raise InvalidArgumentError("give exactly one of --preset, --spec, --waypoints")
    if waypoints is not None:
        if speed is None:
            raise InvalidArgumentError("--waypoints needs --speed", "speed")
        profile = waypoints_to_flow(load_waypoints(waypoints), speed, dt)
        run.inputs["waypoints"] = waypoints
        run.config["speed"] = speed
    else:
        if spec is not None:
            pulses = load_pulse_spec(spec)
            run.inputs["spec"] = spec
        else:
            pulses = PRESETS[preset]
        run.config["pulses"] = _plain(pulses)
        profile = gen_pulses(pulses, dt)
    run.config["dt"] = dt
    _save(run, "profile", profile, out)
    _info(run, f"wrote {len(profile)} samples to {run.outputs['profile']}")


@command("simulate")
@click.option("--input", "input_", type=EXISTING_FILE, required=True, help="Pump command profile CSV.")
@click.option("--params", type=EXISTING_FILE, default=None, help="Model coefficients (default: reference set).")
@click.option("--out", default="q.csv", show_default=True, help="Output flow profile CSV.")
@click.option("--svg", default=None, help="Optional plot of input and output.")
def cmd_simulate(run: Run, input_, params, out, svg):
    """Simulate nozzle flow for a pump command."""
    u = load_profile(input_)
    run.inputs["input"] = input_
    run.config["dt"] = u.dt
    q = simulate(build_state_space(_params(run, params), u.dt), u)
    _save(run, "q", q, out)
    _plot(run, "svg", svg, [("u (command)", u.times, u.samples), ("q (nozzle)", q.times, q.samples)],
          title="Simulated flow", ylabel="flow [mm^3/s]")


@command("calibrate")
@click.option("--input", "input_", type=EXISTING_FILE, required=True, help="Pump command profile CSV.")
@click.option("--measured", type=EXISTING_FILE, required=True, help="Measured nozzle flow CSV.")
@click.option("--init", "init", type=EXISTING_FILE, default=None, help="Initial coefficients (default: all ones).")
@click.option("--init-scale", type=float, default=1.0, show_default=True, help="Multiply the initial coefficients.")
@click.option("--config", type=EXISTING_FILE, default=None, help="key=value calibration settings.")
@click.option("--h", "h", type=float, default=None, help="Gradient step scale.")
@click.option("--q-b", type=float, default=None, help="Low-flow weighting offset [mm^3/s].")
@click.option("--rel-stop", type=float, default=None, help="Relative cost change that stops the descent.")
@click.option("--max-iters", type=int, default=None, help="Iteration budget.")
@click.option("--out", default="params_fit.txt", show_default=True, help="Fitted coefficients (key=value).")
@click.option("--history", default="cost.csv", show_default=True, help="Cost per iterate (iter,cost).")
@click.option("--svg", default=None, help="Optional plot of measured vs fitted flow.")
def cmd_calibrate(run: Run, input_, measured, init, init_scale, config, h, q_b, rel_stop, max_iters, out, history, svg):
    """Fit the model coefficients to measured (u, q) data."""
    u = load_profile(input_)
    q = load_profile(measured)
    run.inputs.update(input=input_, measured=measured)
    cfg = coerce_config(CalibrationConfig, config, _overrides(h=h, q_b=q_b, rel_stop=rel_stop, max_iters=max_iters))
    if config:
        run.inputs["config"] = config
    if u.dt != q.dt:
        raise InvalidArgumentError(f"input dt {u.dt:g} and measured dt {q.dt:g} differ", "measured")
    if cfg.dt != u.dt:
        u, q = resample(u, cfg.dt), resample(q, cfg.dt)
    start = ModelParams(*([1.0] * 7)) if init is None else load_params(init)
    if init:
        run.inputs["init"] = init
    start = ModelParams.from_vector(start.to_vector() * init_scale)
    run.config.update(calibration=_plain(cfg), init=start.as_dict())
    rec = calibrate(u, q, start, cfg)
    path = run.out(out)
    save_params(rec.params, path)
    run.outputs["params"] = path
    _write_history(run, "history", history, rec.cost_history)
    run.config["result"] = {"iterations": rec.iterations, "converged": rec.converged,
                            "initial_cost": rec.initial_cost, "final_cost": rec.final_cost}
    _info(run, f"cost {rec.initial_cost:.6g} -> {rec.final_cost:.6g} in {rec.iterations} iterates "
               f"({'converged' if rec.converged else 'budget exhausted'})")
    if svg:
        fit = simulate(build_state_space(rec.params, cfg.dt), u)
        _plot(run, "svg", svg, [("measured q", q.times, q.samples), ("fitted q", fit.times, fit.samples),
                                ("u", u.times, u.samples)], title="Calibration fit", ylabel="flow [mm^3/s]")


@command("compensate")
@click.option("--ref", "--reference", "reference", type=EXISTING_FILE, required=True, help="Desired nozzle flow CSV.")
@click.option("--model", "--params", "params", type=EXISTING_FILE, default=None,
              help="Model coefficients (default: reference set).")
@click.option("--config", type=EXISTING_FILE, default=None, help="key=value solver settings.")
@click.option("--dt", type=float, default=None, help="Control step [s] (reference is resampled to it).")
@click.option("--xi", type=float, default=None, help="Tracking weight.")
@click.option("--r1", type=float, default=None, help="Effort weight below the reversal threshold.")
@click.option("--r2", type=float, default=None, help="Effort weight at or above the threshold.")
@click.option("--u-th", type=float, default=None, help="Reversal threshold [mm^3/s].")
@click.option("--max-iters", type=int, default=None, help="Iteration budget.")
@click.option("--rel-stop", type=float, default=None, help="Relative cost change that stops the iteration.")
@click.option("--tail", type=float, default=None, help="Zero-flow padding appended to the reference [s].")
@click.option("--effort-penalty", type=click.Choice(EFFORT_MODES), default=None, help="Effort term reading.")
@click.option("--out", "out_u", default="u_opt.csv", show_default=True, help="Compensated command CSV.")
@click.option("--pred", "out_q", default="q_pred.csv", show_default=True, help="Predicted flow CSV.")
@click.option("--out-ref", default="q_ref.csv", show_default=True, help="Tracked (tail-padded) reference CSV.")
@click.option("--report", default="report.csv", show_default=True, help="Cost per iteration (iter,cost).")
@click.option("--svg", default=None, help="Optional plot of reference, naive and compensated flow.")
def cmd_compensate(run: Run, reference, params, config, dt, xi, r1, r2, u_th, max_iters, rel_stop, tail,
                   effort_penalty, out_u, out_q, out_ref, report, svg):
    """Compute the pump command that makes the nozzle flow track a reference."""
    cfg = coerce_config(IlqrConfig, config, _overrides(dt=dt, xi=xi, r1=r1, r2=r2, u_th=u_th, max_iters=max_iters,
                                                       rel_stop=rel_stop, tail=tail, effort_penalty=effort_penalty))
    if config:
        run.inputs["config"] = config
    ref = resample(load_profile(reference), cfg.dt)
    run.inputs["reference"] = reference
    model = build_state_space(_params(run, params), cfg.dt)
    run.config["solver"] = _plain(cfg)
    res = ilqr_solve(model, ref, cfg=cfg)
    _save(run, "u_opt", res.u_opt, out_u)
    _save(run, "q_pred", res.q_pred, out_q)
    _save(run, "q_ref", res.q_ref, out_ref)
    _write_history(run, "report", report, res.cost_history)
    naive = simulate(model, res.q_ref)
    summary = {"iterations": res.iterations, "converged": res.converged, "best_iteration": res.best_iteration,
               "initial_cost": res.cost_history[0], "final_cost": res.cost_history[res.best_iteration],
               "rmse_naive": rmse(naive, res.q_ref), "rmse_compensated": rmse(res.q_pred, res.q_ref)}
    run.config["result"] = summary
    _info(run, f"RMSE naive {summary['rmse_naive']:.6g} -> compensated {summary['rmse_compensated']:.6g} "
               f"after {res.iterations} iterations")
    t = res.q_ref.times
    _plot(run, "svg", svg, [("reference", t, res.q_ref.samples), ("naive q", t, naive.samples),
                            ("compensated q", t, res.q_pred.samples), ("compensated u", t, res.u_opt.samples)],
          title="Flow compensation", ylabel="flow [mm^3/s]")


@command("evaluate")
@click.option("--pred", type=EXISTING_FILE, required=True, help="Predicted or measured flow CSV.")
@click.option("--ref", type=EXISTING_FILE, required=True, help="Reference flow CSV.")
def cmd_evaluate(run: Run, pred, ref):
    """Print the RMSE between two flow profiles."""
    a, b = load_profile(pred), load_profile(ref)
    run.inputs.update(pred=pred, ref=ref)
    if a.dt != b.dt:
        raise InvalidArgumentError(f"sample steps differ ({a.dt:g} vs {b.dt:g})", "ref")
    value = rmse(a, b)
    run.config["rmse"] = value
    click.echo(fmt(value))


@command("evaluate-iou")
@click.option("--mask", type=EXISTING_FILE, required=True, help="Binary mask PGM.")
@click.option("--target", type=EXISTING_FILE, required=True, help="Target mask PGM.")
def cmd_evaluate_iou(run: Run, mask, target):
    """Print the intersection-over-union of two masks."""
    value = iou(read_pgm(mask), read_pgm(target))
    run.inputs.update(mask=mask, target=target)
    run.config["iou"] = value
    click.echo(fmt(value))


def _extent(text):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        values = ()
    if len(values) != 4:
        raise InvalidArgumentError(f"--extent needs x0,y0,x1,y1, got {text!r}", "extent")
    return values


@command("render-bead")
@click.option("--flow", type=EXISTING_FILE, required=True, help="Deposited flow profile CSV.")
@click.option("--v", "v", type=float, required=True, help="Nozzle speed [mm/s].")
@click.option("--aspect", type=float, default=2.0 / 3.0, show_default=True, help="Bead height / width.")
@click.option("--scale", type=float, default=0.05, show_default=True, help="Pixel size [mm/px].")
@click.option("--view", type=click.Choice(VIEWS), default="top", show_default=True)
@click.option("--waypoints", type=EXISTING_FILE, default=None, help="Path to follow (default: straight along +x).")
@click.option("--extent", default=None, help="Frame x0,y0,x1,y1 in mm (use the same frame for masks you compare).")
@click.option("--out", default="bead.pgm", show_default=True, help="Output mask (PGM).")
@click.option("--photo", default=None, help="Also write a synthetic photo (PPM).")
def cmd_render_bead(run: Run, flow, v, aspect, scale, view, waypoints, extent, out, photo):
    """Rasterize the bead a flow profile deposits."""
    q = load_profile(flow)
    run.inputs["flow"] = flow
    bead = bead_from_flow(q, v, aspect)
    if waypoints is not None:
        run.inputs["waypoints"] = waypoints
        path = waypoints_to_path(load_waypoints(waypoints), v, q.dt)
        if path.shape[0] != len(q):
            raise InvalidArgumentError(f"waypoint path has {path.shape[0]} samples, flow has {len(q)}", "waypoints")
    else:
        path = straight_path(len(q), v * q.dt)
    frame = _extent(extent) if extent else default_extent(bead, path, view)
    run.config.update(v=v, aspect=aspect, scale=scale, view=view, extent=list(frame))
    mask = rasterize_bead(bead, path, scale, view, frame)
    mpath = run.out(out)
    write_pgm(mask, mpath)
    run.outputs["mask"] = mpath
    if photo:
        ppath = run.out(photo)
        write_ppm(compose_photo(mask), ppath)
        run.outputs["photo"] = ppath
    _info(run, f"{view} mask {mask.width_px}x{mask.height_px} px, {int(mask.pixels.sum())} foreground")


def main(argv=None):
    cli.main(args=argv, prog_name="flowcomp")


if __name__ == "__main__":
    main()
