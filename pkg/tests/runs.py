"""Process-wide cache of the expensive preset runs shared by several test modules."""
from functools import lru_cache

from clonal_selection.calibration import build_preset
from clonal_selection.model import Grid
from clonal_selection.ode import ide_to_ode, ode_simulate
from clonal_selection.solver import SolverConfig, simulate

DESK = SolverConfig(dt=1e-2, horizon=1e4, record_every=500)


@lru_cache(maxsize=None)
def preset(name, points=200):
    return build_preset(name, Grid.midpoint(points))


@lru_cache(maxsize=None)
def run(name, dt=1e-2, points=200, horizon=1e4):
    p = preset(name, points)
    steps = int(round(horizon / dt))
    # keep the totals series at 0.01-day spacing whatever dt is
    series = max(1, int(round(1e-2 / dt)))
    record = max(series, (steps // 2000) // series * series)
    cfg = SolverConfig(dt=dt, horizon=horizon, record_every=record, series_every=series)
    return simulate(p.initial, p.params, p.grid, cfg)


@lru_cache(maxsize=None)
def ode_run(name="cal1-single", dt=1e-2, horizon=1e4):
    p = preset(name)
    state, params = ide_to_ode(p.initial, p.params, p.grid)
    steps = int(round(horizon / dt))
    return ode_simulate(state, params, SolverConfig(dt=dt, horizon=horizon, record_every=max(1, steps // 2000)))
