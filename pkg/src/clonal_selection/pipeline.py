"""Glue between configs, the solver and the analysis: used by the CLI and scripts."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import analysis as an
from .calibration import EXPECTATIONS, Preset, alignment_offsets, build_spec, is_aligned
from .config import RunConfig
from .ode import ide_to_ode, ode_simulate
from .solver import SolverConfig, Trajectory, simulate

log = logging.getLogger(__name__)

EQUIVALENCE_RTOL = 1e-10


def prepare(config: RunConfig) -> Preset:
    """Build the preset or inline model; misaligned grids only warn here."""
    spec = config.model_spec()
    grid = config.make_grid()
    if not is_aligned(spec, grid):
        offs = alignment_offsets(spec, grid)
        worst = max(offs.values()) if offs else 0.0
        log.warning(
            "grid of %d %s points does not place the rate maxima %s on grid features "
            "(worst offset %.3g, half spacing %.3g); prefer a count divisible by 20",
            grid.num_points, grid.kind, sorted(offs), worst, grid.cell_width / 2,
        )
    expected = EXPECTATIONS.get(config.preset) if config.preset else None
    return build_spec(spec, grid, name=config.name, expected=expected, strict=False)


def run(config: RunConfig) -> Tuple[Preset, Trajectory]:
    preset = prepare(config)
    traj = simulate(preset.initial, preset.params, preset.grid, config.solver_config())
    return preset, traj


@dataclass
class Summary:
    sections: List[Tuple[str, List[str]]] = field(default_factory=list)
    machine: Dict[str, object] = field(default_factory=dict)


def summarize(preset: Preset, traj: Trajectory, config: RunConfig) -> Summary:
    """Analysis block for report.txt."""
    out = Summary()
    m = out.machine
    M = traj.num_stages
    T_end = float(traj.times[-1])
    T_start = float(traj.times[0])
    span = T_end - T_start

    m["preset"] = preset.name
    m["num_points"] = preset.grid.num_points
    m["grid_kind"] = preset.grid.kind
    m["dt"] = float(traj.meta["dt"])
    m["horizon"] = float(traj.meta["horizon"])
    m["steps"] = int(traj.meta["num_steps"])
    m["wall_time_s"] = float(traj.meta["wall_time"])
    m["clamp_count"] = int(traj.meta["clamp_count"])
    lines = [f"t = {T_end:g} days"]
    for i in range(M):
        m[f"final_rho_{i + 1}"] = float(traj.totals[-1, i])
        lines.append(f"rho_{i + 1} = {traj.totals[-1, i]:.6e} cells/kg")
    m["final_signal"] = float(traj.signal[-1])
    lines.append(f"s = {traj.signal[-1]:.6f}")
    out.sections.append(("Final totals", lines))

    maxima = preset.expected.selected if preset.expected else ()
    if M == 3 and len(maxima) == 1:
        x = maxima[0]
        pred = an.steady_state_predictor(
            float(preset.spec.self_renewal[0](x)), float(preset.spec.self_renewal[1](x)),
            float(preset.spec.proliferation[0](x)), float(preset.spec.proliferation[1](x)),
            preset.params.feedback_strength, preset.params.clearance,
        )
        lines = [f"single clone at x = {x:g}"]
        for i, v in enumerate(pred, start=1):
            rel = traj.totals[-1, i - 1] / v - 1.0
            m[f"predicted_rho_{i}"] = float(v)
            m[f"relative_error_rho_{i}"] = float(rel)
            lines.append(f"rho_{i}* = {v:.6e} (final differs by {100 * rel:+.3f}%)")
        out.sections.append(("Equilibrium prediction", lines))

    lines = []
    state = traj.final_state
    for stage in range(1, M + 1):
        rep = an.concentration_report(
            state, preset.params, preset.grid, config.delta, stage=stage,
            centers=maxima or None, threshold=config.support_threshold,
        )
        m[f"full_support_{stage}"] = rep.full_support
        m[f"argmax_density_{stage}"] = rep.argmax_density
        m[f"window_fraction_{stage}"] = rep.total_fraction
        desc = ", ".join(f"{w.center:g}: {w.fraction:.4f}" for w in rep.windows) or "no maxima"
        lines.append(
            f"stage {stage}: windows (+-{config.delta:g}) {desc}; argmax n = {rep.argmax_density:.4f}; "
            f"full support = {rep.full_support} (min/max = {rep.min_over_max:.3e})"
        )
    out.sections.append(("Concentration at final time", lines))

    window = (T_end - config.theorem_window * span, T_end)
    try:
        sign = an.check_theorem_signs(traj, window)
        m["theorem_window_start"] = sign.window[0]
        for i, v in enumerate(sign.max_rates, start=1):
            m[f"max_growth_rate_R{i}"] = float(v)
        m["theorem_signs_ok"] = sign.passed
        out.sections.append(("Growth-integral signs", [
            f"window [{sign.window[0]:g}, {sign.window[1]:g}]",
            *(f"max_x mean dR_{i}/dt = {v:+.4e} /day" for i, v in enumerate(sign.max_rates, start=1)),
            f"passed = {sign.passed}",
        ]))
    except an.AnalysisError as exc:
        out.sections.append(("Growth-integral signs", [f"not evaluated: {exc}"]))

    try:
        osc = an.oscillation_reports(
            traj, (T_end - config.oscillation_window * span, T_end),
            prominence=config.prominence, amplitude_floor=config.amplitude_floor,
        )
        lines = []
        for i, r in enumerate(osc, start=1):
            m[f"oscillation_{i}"] = r.classification
            m[f"oscillation_peaks_{i}"] = r.num_peaks
            m[f"oscillation_amplitude_{i}"] = r.amplitude
            m[f"oscillation_period_{i}"] = r.period
            lines.append(f"rho_{i}: {r.classification}, {r.num_peaks} peaks, period {r.period:.4g} d, amplitude {r.amplitude:.4g}")
        out.sections.append(("Oscillations", lines))
    except an.AnalysisError as exc:
        out.sections.append(("Oscillations", [f"not evaluated: {exc}"]))

    bounds = an.bound_estimates(preset.params, preset.initial)
    violations = an.check_bounds(traj, bounds)
    m["bound_violations"] = len(violations)
    out.sections.append(("A-priori bounds", [
        "B = " + ", ".join(f"{b:.4g}" for b in bounds.ratio_bounds),
        "rho_bar = " + ", ".join("n/a" if v is None else f"{v:.4g}" for v in bounds.rho_bar),
        f"violations = {len(violations)}",
    ]))
    if preset.warnings:
        out.sections.append(("Warnings", list(preset.warnings)))
    return out


# ---------------------------------------------------------------------------
# Verification suites


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    values: Dict[str, object] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = " ".join(f"{k}={v}" for k, v in self.values.items())
        return f"check={self.name} status={status} {extra}".rstrip()


def verify_bounds(preset: Preset, traj: Trajectory) -> CheckResult:
    bounds = an.bound_estimates(preset.params, preset.initial)
    v = an.check_bounds(traj, bounds)
    return CheckResult("bounds", not v, f"{len(v)} violation(s)", {"preset": preset.name, "violations": len(v)})


def verify_theorem(preset: Preset, traj: Trajectory, window_fraction: float = 0.25) -> CheckResult:
    T_end = float(traj.times[-1])
    start = T_end - window_fraction * (T_end - float(traj.times[0]))
    rep = an.check_theorem_signs(traj, (start, T_end))
    vals = {"preset": preset.name}
    for i, v in enumerate(rep.max_rates, start=1):
        vals[f"max_rate_R{i}"] = f"{v:.6e}"
    return CheckResult("theorem", rep.passed, "windowed growth-rate signs", vals)


def ode_equivalence_error(preset: Preset, traj: Trajectory, config: SolverConfig) -> float:
    """Max relative deviation of the IDE totals from the bridged ODE totals."""
    state, params = ide_to_ode(preset.initial, preset.params, preset.grid)
    ode = ode_simulate(state, params, config)
    return float(np.max(np.abs(traj.totals - ode.totals) / np.abs(ode.totals)))


def verify_ode(preset: Preset, traj: Trajectory, config: SolverConfig, err: Optional[float] = None) -> CheckResult:
    if err is None:
        err = ode_equivalence_error(preset, traj, config)
    return CheckResult(
        "ode-equivalence", err <= EQUIVALENCE_RTOL, "IDE vs bridged ODE totals",
        {"preset": preset.name, "max_rel_error": f"{err:.3e}", "tolerance": f"{EQUIVALENCE_RTOL:g}"},
    )


SUITES = ("bounds", "theorem", "ode-equivalence", "all")


def run_suite(suite: str, config: RunConfig) -> List[CheckResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    preset = prepare(config)
    solver_cfg = config.solver_config()
    names = ["bounds", "theorem", "ode-equivalence"] if suite == "all" else [suite]
    with ThreadPoolExecutor(max_workers=2) as pool:
        ide = pool.submit(simulate, preset.initial, preset.params, preset.grid, solver_cfg)
        ode_err = None
        if "ode-equivalence" in names:
            state, params = ide_to_ode(preset.initial, preset.params, preset.grid)
            ode = pool.submit(ode_simulate, state, params, solver_cfg)
        traj = ide.result()
        if "ode-equivalence" in names:
            ode_tr = ode.result()
            ode_err = float(np.max(np.abs(traj.totals - ode_tr.totals) / np.abs(ode_tr.totals)))
    results = []
    for name in names:
        if name == "bounds":
            results.append(verify_bounds(preset, traj))
        elif name == "theorem":
            results.append(verify_theorem(preset, traj, config.theorem_window))
        else:
            results.append(verify_ode(preset, traj, solver_cfg, ode_err))
    return results
