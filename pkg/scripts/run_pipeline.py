"""End-to-end run: generate, simulate, calibrate, compensate, then score against the true plant.

    python3 scripts/run_pipeline.py [OUT_DIR]

The "measured" training data is simulated with the reference parameters; the
fit starts from all-ones and the compensated input is replayed through the
reference plant so the reported RMSE is not the fitted model grading itself.
"""
import subprocess
import sys
import time
from pathlib import Path

from flowcomp.measurement import rmse
from flowcomp.model import REFERENCE_PARAMS, build_state_space, simulate
from flowcomp.profiles import load_profile, save_params


def flowcomp(out, *args):
    cmd = [sys.executable, "-m", "flowcomp.cli", "--out-dir", str(out), *map(str, args)]
    print("$ flowcomp", " ".join(map(str, args)), flush=True)
    subprocess.run(cmd, check=True)


def main(out="pipeline_out"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    save_params(REFERENCE_PARAMS, out / "params_true.txt")
    flowcomp(out, "gen-profile", "--preset", "training", "--dt", "0.01", "--out", "u_train.csv")
    flowcomp(out, "simulate", "--input", out / "u_train.csv", "--params", out / "params_true.txt",
             "--out", "q_train.csv")
    flowcomp(out, "calibrate", "--input", out / "u_train.csv", "--measured", out / "q_train.csv",
             "--out", "params_fit.txt", "--svg", "cost.svg")
    flowcomp(out, "gen-profile", "--preset", "validation", "--dt", "0.0005", "--out", "q_target.csv")
    flowcomp(out, "compensate", "--model", out / "params_fit.txt", "--ref", out / "q_target.csv",
             "--svg", "compensation.svg")
    flowcomp(out, "evaluate", "--pred", out / "q_pred.csv", "--ref", out / "q_ref.csv")

    ref = load_profile(out / "q_ref.csv")
    plant = build_state_space(REFERENCE_PARAMS, ref.dt)
    naive = rmse(simulate(plant, ref), ref)
    tuned = rmse(simulate(plant, load_profile(out / "u_opt.csv")), ref)
    print(f"true plant RMSE: naive {naive:.4f}, compensated {tuned:.4f}, ratio {tuned / naive:.3f}")
    print(f"total {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main(*sys.argv[1:])
