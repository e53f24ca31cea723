"""Run every preset at the default discretisation and print the headline numbers.

    python3 scripts/run_presets.py [--horizon 1e4] [--out runs/]
"""
import argparse
import dataclasses
from pathlib import Path

from clonal_selection import output
from clonal_selection.calibration import PRESET_NAMES
from clonal_selection.config import RunConfig
from clonal_selection.pipeline import run, summarize

KEYS = ("final_rho_1", "final_rho_2", "final_rho_3", "full_support_1", "argmax_density_1", "oscillation_3", "wall_time_s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=1e4)
    ap.add_argument("--out", type=Path, help="write one report per preset here")
    args = ap.parse_args()

    for name in PRESET_NAMES:
        cfg = dataclasses.replace(RunConfig(preset=name), horizon=args.horizon)
        preset, traj = run(cfg)
        summary = summarize(preset, traj, cfg)
        print(name)
        for k in KEYS:
            if k in summary.machine:
                print(f"  {k:18s} {summary.machine[k]}")
        if args.out:
            output.ensure_dir(args.out)
            output.write_report(args.out / f"{name}.txt", name, summary.sections, summary.machine)


if __name__ == "__main__":
    main()
