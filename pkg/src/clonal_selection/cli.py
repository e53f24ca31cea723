"""Command-line front end: ``simulate``, ``reproduce`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 runtime or solver error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import analysis as an
from . import output
from .config import ConfigError, RunConfig, _validated, parse_config, serialize_config
from .model import ModelError
from .pipeline import SUITES, run, run_suite, summarize
from .solver import SolverError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("clonal_selection")

FIGURES = {
    # figure: (preset, kind, inset horizon)
    "fig2": ("cal1-single", "heatmap", 500.0),
    "fig3": ("cal1-multi", "heatmap", 200.0),
    "fig4": ("cal1-flat", "heatmap", None),
    "fig5": (("cal1-single", "cal1-multi", "cal1-flat"), "totals", None),
    "fig6": ("cal2-hopf", "heatmap", None),
    "fig7": ("cal2-hopf", "totals", None),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--preset", help="preset name (cal1-single, cal1-multi, cal1-flat, cal2-hopf)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--grid", type=int, metavar="N", help="number of grid points")
    common.add_argument("--dt", type=float, metavar="X", help="time step (days)")
    common.add_argument("--horizon", type=float, metavar="T", help="final time (days)")
    common.add_argument("--paper-fidelity", action="store_true", help="1000 points, dt = 1e-4")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="clonal-selection", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run one configuration and write CSVs and a report")
    rep = sub.add_parser("reproduce", parents=[common], help="write the data behind one figure")
    rep.add_argument("--figure", required=True, choices=sorted(FIGURES))
    ver = sub.add_parser("verify", parents=[common], help="run a verification suite")
    ver.add_argument("--suite", default="all", choices=SUITES)
    return parser


def load_config(args, default_preset: Optional[str] = "cal1-single") -> RunConfig:
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
    else:
        cfg = RunConfig(preset=args.preset or default_preset)
    changes = {}
    if args.preset and args.config:
        changes.update(preset=args.preset, model=None)
    for flag, name in (("grid", "grid"), ("dt", "dt"), ("horizon", "horizon"), ("out", "out_dir")):
        v = getattr(args, flag)
        if v is not None:
            changes[name] = v
    if args.paper_fidelity:
        changes["paper_fidelity"] = True
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    return _validated(cfg, {})


def cmd_simulate(config: RunConfig) -> int:
    out = output.ensure_dir(config.out_dir)
    preset, traj = run(config)
    output.write_totals(out / "totals.csv", traj, every=config.totals_every)
    for stage in range(1, traj.num_stages + 1):
        output.write_heatmap(out / f"heatmap_stage{stage}.csv", traj, preset.grid, stage, every=config.heatmap_every)
    summary = summarize(preset, traj, config)
    output.write_report(out / "report.txt", f"Simulation: {preset.name}", summary.sections, summary.machine)
    (out / "config.txt").write_text(serialize_config(config), encoding="utf-8")
    print(f"wrote {out}/totals.csv, heatmap_stage1..{traj.num_stages}.csv, report.txt")
    return EXIT_OK


def cmd_reproduce(figure: str, config: RunConfig) -> int:
    presets, kind, inset = FIGURES[figure]
    out = output.ensure_dir(config.out_dir)
    if isinstance(presets, str):
        presets = (presets,)
    machine = {"figure": figure}
    sections = []
    for name in presets:
        cfg = dataclasses.replace(config, preset=name, model=None)
        preset, traj = run(cfg)
        tag = figure if len(presets) == 1 else f"{figure}_{name}"
        marker_stem = preset.spec.stem_maxima()
        marker_prog = preset.spec.progenitor_maxima()
        machine[f"{name}.black_lines"] = ",".join(f"{x:g}" for x in marker_stem) or "none"
        machine[f"{name}.white_lines"] = ",".join(f"{x:g}" for x in marker_prog) or "none"
        lines = []
        if kind == "heatmap":
            for stage in range(1, traj.num_stages + 1):
                output.write_heatmap(out / f"{tag}_stage{stage}.csv", traj, preset.grid, stage, every=cfg.heatmap_every)
                if inset is not None:
                    output.write_heatmap(out / f"{tag}_inset_stage{stage}.csv", traj, preset.grid, stage, t_max=inset)
                peak = float(preset.grid.points[traj.snapshots[-1, stage - 1].argmax()])
                machine[f"{name}.final_peak_stage{stage}"] = peak
                lines.append(f"stage {stage}: final-time peak at x = {peak:.4f}")
        else:
            output.write_totals(out / f"{tag}_totals.csv", traj, every=cfg.totals_every)
            T_end = float(traj.times[-1])
            reps = an.oscillation_reports(
                traj, (T_end - cfg.oscillation_window * (T_end - traj.times[0]), T_end),
                prominence=cfg.prominence, amplitude_floor=cfg.amplitude_floor,
            )
            for i, r in enumerate(reps, start=1):
                machine[f"{name}.oscillation_{i}"] = r.classification
                machine[f"{name}.final_rho_{i}"] = float(traj.totals[-1, i - 1])
                lines.append(f"rho_{i}: {r.classification}, final {traj.totals[-1, i - 1]:.6e}")
        lines.append(f"black lines (argmax a_1): {machine[f'{name}.black_lines']}")
        lines.append(f"white lines (argmax a_2): {machine[f'{name}.white_lines']}")
        sections.append((name, lines))
    output.write_report(out / f"{figure}_report.txt", f"Figure data: {figure}", sections, machine)
    print(f"wrote {figure} data to {out}")
    return EXIT_OK


def cmd_verify(suite: str, config: RunConfig) -> int:
    results = run_suite(suite, config)
    lines = [r.line() for r in results]
    for line in lines:
        print(line)
    ok = all(r.passed for r in results)
    try:
        out = output.ensure_dir(config.out_dir)
        (out / f"verify_{suite}.txt").write_text("\n".join(lines) + f"\noverall={'PASS' if ok else 'FAIL'}\n", encoding="utf-8")
    except OSError as exc:
        log.warning("could not write verification report: %s", exc)
    print(f"overall={'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    default = "cal1-single"
    try:
        config = load_config(args, default)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "reproduce":
            return cmd_reproduce(args.figure, config)
        return cmd_verify(args.suite, config)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ModelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
