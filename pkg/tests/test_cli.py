import json
import xml.dom.minidom

import numpy as np
import pytest
from click.testing import CliRunner

from flowcomp.cli import cli
from flowcomp.model import FlowProfile, ModelParams
from flowcomp.profiles import load_profile, save_params, save_profile
from flowcomp.svg import line_plot

COMMANDS = ["gen-profile", "simulate", "calibrate", "compensate", "evaluate", "evaluate-iou", "render-bead"]


def run(tmp_path, *args):
    return CliRunner().invoke(cli, ["--out-dir", str(tmp_path), "--quiet", *map(str, args)])


def test_gen_profile_validation(tmp_path):
    res = run(tmp_path, "gen-profile", "--preset", "validation", "--dt", "0.01", "--out", "ref.csv")
    assert res.exit_code == 0, res.output
    p = load_profile(tmp_path / "ref.csv")
    assert set(np.unique(p.samples)) == {0.0, 2.4}


def test_gen_profile_needs_one_source(tmp_path):
    res = run(tmp_path, "gen-profile")
    assert res.exit_code == 2


def test_simulate_zero_input(tmp_path):
    save_profile(FlowProfile(0.01, np.zeros(50)), tmp_path / "u.csv")
    res = run(tmp_path, "simulate", "--input", tmp_path / "u.csv", "--out", "q.csv")
    assert res.exit_code == 0
    assert not load_profile(tmp_path / "q.csv").samples.any()
    manifest = json.loads((tmp_path / "simulate.manifest.json").read_text())
    assert manifest["subcommand"] == "simulate" and manifest["status"] == "ok"
    assert set(manifest) >= {"config", "inputs", "outputs", "duration_s", "tool_version"}


def test_missing_file_names_path(tmp_path):
    res = run(tmp_path, "simulate", "--input", tmp_path / "nope.csv")
    assert res.exit_code == 2
    assert "nope.csv" in res.output


def test_malformed_file_is_usage_error(tmp_path):
    (tmp_path / "bad.csv").write_text("time_s,value_mm3_s\n0,1\n0.01,abc\n")
    res = CliRunner().invoke(cli, ["--out-dir", str(tmp_path), "simulate", "--input", str(tmp_path / "bad.csv")])
    assert res.exit_code == 2
    assert "bad.csv:3" in res.output


def test_divergence_is_numeric_failure(tmp_path):
    save_profile(FlowProfile(1.0, np.ones(3000)), tmp_path / "u.csv")
    res = run(tmp_path, "simulate", "--input", tmp_path / "u.csv")
    assert res.exit_code == 1
    manifest = json.loads((tmp_path / "simulate.manifest.json").read_text())
    assert manifest["status"].startswith("numeric failure")


def test_evaluate_identical(tmp_path):
    save_profile(FlowProfile(0.01, [1.0, 2.0, 3.0]), tmp_path / "a.csv")
    res = run(tmp_path, "evaluate", "--pred", tmp_path / "a.csv", "--ref", tmp_path / "a.csv")
    assert res.exit_code == 0 and res.output.strip() == "0"


def test_compensate_four_pulses(tmp_path):
    assert run(tmp_path, "gen-profile", "--preset", "validation", "--dt", "0.0005", "--out", "ref.csv").exit_code == 0
    res = run(tmp_path, "compensate", "--ref", tmp_path / "ref.csv", "--svg", "comp.svg")
    assert res.exit_code == 0, res.output
    for name in ("u_opt.csv", "q_pred.csv", "q_ref.csv", "report.csv"):
        assert (tmp_path / name).exists()
    rows = (tmp_path / "report.csv").read_text().split()
    assert rows[0] == "iter,cost"
    costs = [float(r.split(",")[1]) for r in rows[1:]]
    assert min(costs) < costs[0]
    xml.dom.minidom.parse(str(tmp_path / "comp.svg"))
    out = run(tmp_path, "evaluate", "--pred", tmp_path / "q_pred.csv", "--ref", tmp_path / "q_ref.csv")
    assert out.exit_code == 0 and float(out.output) < 1.0


def test_calibrate_from_file(tmp_path):
    run(tmp_path, "gen-profile", "--spec", _spec(tmp_path), "--out", "u.csv")
    run(tmp_path, "simulate", "--input", tmp_path / "u.csv", "--out", "q.csv")
    init = tmp_path / "init.txt"
    save_params(ModelParams(1.2, 17.0, 1.1, 2.2, 9.0, 6.0, 1.0), init)
    res = run(tmp_path, "calibrate", "--input", tmp_path / "u.csv", "--measured", tmp_path / "q.csv",
              "--init", init, "--max-iters", "10")
    assert res.exit_code == 0, res.output
    assert (tmp_path / "params_fit.txt").exists()
    history = (tmp_path / "cost.csv").read_text().split()
    assert history[0] == "iter,cost" and len(history) == 11


def _spec(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text("magnitudes = 3, 6, 2\npulse_width = 1\ngap = 1\nlead_in = 0.5\n")
    return path


def test_render_and_iou(tmp_path):
    run(tmp_path, "gen-profile", "--spec", _spec(tmp_path), "--out", "q.csv")
    common = ["--v", "10", "--scale", "0.05", "--extent=-0.5,-1,66,1"]
    res = run(tmp_path, "render-bead", "--flow", tmp_path / "q.csv", *common, "--out", "a.pgm", "--photo", "a.ppm")
    assert res.exit_code == 0, res.output
    run(tmp_path, "render-bead", "--flow", tmp_path / "q.csv", *common, "--out", "b.pgm")
    res = run(tmp_path, "evaluate-iou", "--mask", tmp_path / "a.pgm", "--target", tmp_path / "b.pgm")
    assert res.exit_code == 0 and res.output.strip() == "1"
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6")


def test_bad_extent(tmp_path):
    save_profile(FlowProfile(0.01, [1.0, 1.0]), tmp_path / "q.csv")
    res = run(tmp_path, "render-bead", "--flow", tmp_path / "q.csv", "--v", "1", "--extent", "1,2")
    assert res.exit_code == 2


@pytest.mark.parametrize("name", COMMANDS)
def test_help_lists_every_flag(name):
    res = CliRunner().invoke(cli, [name, "--help"])
    assert res.exit_code == 0
    command = cli.commands[name]
    for param in command.params:
        for opt in param.opts:
            assert opt in res.output


def test_manifest_override(tmp_path):
    save_profile(FlowProfile(0.01, [0.0, 1.0]), tmp_path / "u.csv")
    target = tmp_path / "m.json"
    res = CliRunner().invoke(cli, ["--out-dir", str(tmp_path), "--manifest", str(target), "--quiet",
                                   "simulate", "--input", str(tmp_path / "u.csv")])
    assert res.exit_code == 0
    assert json.loads(target.read_text())["outputs"]["q"].endswith("q.csv")


def test_svg_well_formed():
    t = np.linspace(0, 1, 50)
    text = line_plot([("a <b>", t, np.sin(t)), ("flat", t, np.zeros_like(t))], title="x & y")
    doc = xml.dom.minidom.parseString(text)
    assert doc.documentElement.tagName == "svg"
    assert len(doc.getElementsByTagName("polyline")) == 2
