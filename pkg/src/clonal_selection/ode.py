"""Multi-compartment ODE model with finitely many clones.

Every clone j carries its own self-renewal fractions a_i^j and proliferation
rates p_i^j; all clones share the feedback factor 1 / (1 + K Z_M) where Z_M
is the total count of mature cells. Clone 0 is conventionally the healthy
one, but it is not treated differently.

On a midpoint grid each cell of the IDE discretisation is exactly one clone
with weight n_i(x_k) dx, so this module doubles as an oracle for the IDE
solver. The implementation here is deliberately separate from
:mod:`clonal_selection.model`: clone-major arrays, vectorised numpy, plain
Python time loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Grid, ModelParams, State, StructureError
from .solver import (
    PositivityError,
    SolverConfig,
    SolverError,
    StabilityError,
    STABILITY_LIMIT,
    record_schedule,
)


@dataclass(frozen=True)
class OdeParams:
    """Per-clone rates, arrays of shape (J + 1, M - 1)."""

    self_renewal: np.ndarray
    proliferation: np.ndarray
    feedback_strength: float
    clearance: float

    def __post_init__(self):
        a = np.array(self.self_renewal, dtype=float, ndmin=2)
        p = np.array(self.proliferation, dtype=float, ndmin=2)
        if a.shape != p.shape or a.ndim != 2:
            raise StructureError("self_renewal and proliferation must both be (clones, M - 1)")
        if self.feedback_strength <= 0 or self.clearance <= 0:
            raise ValueError("K and d must be positive")
        object.__setattr__(self, "self_renewal", a)
        object.__setattr__(self, "proliferation", p)

    @property
    def num_clones(self) -> int:
        return self.self_renewal.shape[0]

    @property
    def num_stages(self) -> int:
        return self.self_renewal.shape[1] + 1

    def violations(self) -> list:
        """Per-clone analogue of the IDE admissibility conditions."""
        a, p = self.self_renewal, self.proliferation
        out = []
        for j, i in np.argwhere(~((a > 0.5) & (a < 1.0))):
            out.append(f"clone {j}: a_{i + 1} = {a[j, i]} outside (1/2, 1)")
        for j, i in np.argwhere(~((p > 0.0) & (p < 1.0))):
            out.append(f"clone {j}: p_{i + 1} = {p[j, i]} outside (0, 1)")
        for j, i in np.argwhere(a[:, 1:] >= a[:, :1]):
            out.append(f"clone {j}: a_{i + 2} >= a_1")
        return out


@dataclass(frozen=True)
class OdeState:
    """Counts N_i^j, shape (J + 1, M), cells/kg."""

    counts: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "counts", np.array(self.counts, dtype=float, ndmin=2))


@dataclass
class OdeTrajectory:
    times: np.ndarray
    snapshots: np.ndarray
    series_times: np.ndarray
    totals: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def final_state(self) -> OdeState:
        return OdeState(self.snapshots[-1], float(self.times[-1]))


def mature_total(counts: np.ndarray) -> float:
    """Z_M, summed over clones in ascending index order (numpy pairwise sum)."""
    return float(np.sum(counts[:, -1]))


def ode_rhs(state: OdeState, params: OdeParams) -> OdeState:
    N = state.counts
    if N.shape != (params.num_clones, params.num_stages):
        raise StructureError(f"counts shape {N.shape} != ({params.num_clones}, {params.num_stages})")
    feedback = 1.0 / (1.0 + params.feedback_strength * mature_total(N))
    a, p = params.self_renewal, params.proliferation
    divisions = p * N[:, :-1]
    renewed = 2.0 * a * feedback
    dN = np.zeros_like(N)
    dN[:, :-1] = (renewed - 1.0) * divisions
    dN[:, 1:] += (2.0 - renewed) * divisions
    dN[:, -1] -= params.clearance * N[:, -1]
    return OdeState(dN, state.time)


def ode_simulate(initial: OdeState, params: OdeParams, config: Optional[SolverConfig] = None) -> OdeTrajectory:
    """Forward Euler on the ODE system with the same guards as the IDE solver.

    ``totals`` holds the per-stage sums over clones every ``series_every``
    steps.
    """
    config = config or SolverConfig()
    N = np.array(initial.counts, dtype=float)
    if np.any(N < 0) or not np.all(np.isfinite(N)):
        raise StructureError("initial counts must be finite and non-negative")
    dt = config.dt
    rate = max(2.0 * float(params.proliferation.max()), params.clearance)
    if dt * rate > STABILITY_LIMIT:
        raise StabilityError(f"dt * max_rate = {dt * rate:.3g} exceeds {STABILITY_LIMIT}")

    n_steps = config.num_steps
    rec_steps = record_schedule(n_steps, config.record_every)
    ser_steps = record_schedule(n_steps, config.series_every)
    snaps = np.empty((len(rec_steps),) + N.shape)
    totals = np.empty((len(ser_steps), N.shape[1]))
    i_rec = i_ser = 0
    tol = config.positivity_tolerance
    clamps = 0
    t0 = initial.time

    for step in range(n_steps + 1):
        if i_ser < len(ser_steps) and ser_steps[i_ser] == step:
            totals[i_ser] = N.sum(axis=0)
            i_ser += 1
        if i_rec < len(rec_steps) and rec_steps[i_rec] == step:
            snaps[i_rec] = N
            i_rec += 1
        if step == n_steps:
            break
        N_new = N + dt * ode_rhs(OdeState(N), params).counts
        if not np.all(np.isfinite(N_new)):
            raise SolverError("non-finite count", t0 + (step + 1) * dt)
        neg = N_new < 0
        if neg.any():
            floor = -tol * np.abs(N).max(axis=0)
            if np.any(N_new < floor):
                raise PositivityError("count went negative beyond tolerance", t0 + (step + 1) * dt)
            clamps += int(neg.sum())
            N_new[neg] = 0.0
        N = N_new

    return OdeTrajectory(
        times=t0 + rec_steps * dt,
        snapshots=snaps,
        series_times=t0 + ser_steps * dt,
        totals=totals,
        meta={"clamp_count": clamps, "dt": dt, "num_steps": n_steps},
    )


def ide_to_ode(state: State, params: ModelParams, grid: Grid):
    """Turn each midpoint cell into one clone with counts n_i(x_k) dx."""
    if grid.kind != "midpoint":
        raise StructureError("the IDE/ODE bridge needs a midpoint grid (equal weights)")
    params.check_grid(grid)
    if state.densities.shape != (params.num_stages, grid.num_points):
        raise StructureError("state does not match parameters")
    counts = (state.densities * grid.cell_width).T
    ode_params = OdeParams(
        self_renewal=params.self_renewal.T,
        proliferation=params.proliferation.T,
        feedback_strength=params.feedback_strength,
        clearance=params.clearance,
    )
    if not math.isclose(params.epsilon, 1.0):
        raise StructureError("the ODE system has no time scale; use epsilon = 1")
    return OdeState(counts, state.time), ode_params
