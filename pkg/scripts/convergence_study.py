"""Discretisation checks for the Euler/midpoint scheme, plus the width of the selected peak.

Three tables:
  * time-step refinement of the final totals (expect ratio ~2, first order),
  * grid refinement of the final totals (expect ratio ~4, second order),
  * stage-1 mass within +-0.05 of x = 0.6 against time for the single-clone preset,
    next to the prediction of a Gaussian whose width follows from the curvature
    of the self-renewal maximum.
"""
import argparse
import math

import numpy as np
from scipy.special import erf

from clonal_selection import analysis as an
from clonal_selection.calibration import build_preset
from clonal_selection.model import Grid
from clonal_selection.solver import SolverConfig, simulate


def finals(preset, dt, horizon):
    cfg = SolverConfig(dt=dt, horizon=horizon, record_every=int(round(horizon / dt)))
    return simulate(preset.initial, preset.params, preset.grid, cfg).totals[-1]


def dt_refinement(name, horizon):
    p = build_preset(name)
    vals = [finals(p, dt, horizon) for dt in (2e-2, 1e-2, 5e-3)]
    ratio = np.abs(vals[0] - vals[1]).max() / np.abs(vals[1] - vals[2]).max()
    print(f"dt refinement ({name}, T={horizon:g}): successive-difference ratio {ratio:.3f}")


def grid_refinement(name, horizon):
    vals = [finals(build_preset(name, Grid.midpoint(n)), 1e-2, horizon) for n in (100, 200, 400)]
    d1 = np.abs(vals[1] / vals[0] - 1).max()
    d2 = np.abs(vals[2] / vals[1] - 1).max()
    print(f"grid refinement ({name}, T={horizon:g}): {d1:.3e} -> {d2:.3e}, ratio {d1 / d2:.2f}")


def peak_width(horizon, points):
    p = build_preset("cal1-single", Grid.midpoint(points))
    steps = int(round(horizon / 1e-2))
    cfg = SolverConfig(dt=1e-2, horizon=horizon, record_every=steps // 10)
    traj = simulate(p.initial, p.params, p.grid, cfg)
    # log n_1 ~ R_1; near the maximum R_1 ~ -c t (x - 0.6)^2 with c = 2 s p_1 / 9.68 at the equilibrium signal
    s = float(traj.signal[-1])
    p1 = 0.1 + 0.2 * 0.6
    c = 2 * s * p1 / 9.68
    print(f"stage-1 mass in |x-0.6|<=0.05 (cal1-single, {points} cells)")
    print("      t   measured   gaussian   sigma")
    for k, t in enumerate(traj.times):
        if t == 0:
            continue
        frac = an.window_fraction(traj.snapshots[k, 0], p.grid, 0.6, 0.05)
        sigma = math.sqrt(1 / (2 * c * t))
        gauss = erf(0.05 / (sigma * math.sqrt(2)))
        print(f"{t:8.0f}   {frac:.4f}     {gauss:.4f}     {sigma:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="cal1-single")
    ap.add_argument("--horizon", type=float, default=100.0, help="horizon for the refinement tables")
    ap.add_argument("--width-horizon", type=float, default=1e4)
    ap.add_argument("--width-points", type=int, default=200)
    args = ap.parse_args()
    dt_refinement(args.preset, args.horizon)
    grid_refinement(args.preset, args.horizon)
    peak_width(args.width_horizon, args.width_points)


if __name__ == "__main__":
    main()
