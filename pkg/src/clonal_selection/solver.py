"""Explicit time integration of the IDE system.

The production path is a compiled forward Euler kernel that advances the
densities, the totals series and the growth integrals together. A pure
Python path built on :func:`euler_step` is kept as an independent check of
the kernel, and RK4 is available on that path for convergence studies.
"""
from __future__ import annotations

import math
import time as _time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .model import (
    Grid,
    ModelError,
    ModelParams,
    State,
    StructureError,
    _check_pair,
    feedback_signal,
    max_rate,
    net_growth_table,
    rhs,
)

STABILITY_WARN = 0.1
STABILITY_LIMIT = 0.5


class SolverError(ModelError):
    """A step failed; ``time`` is the model time at which it happened."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (t = {time:.17g})"
        super().__init__(message)


class StabilityError(SolverError):
    pass


class PositivityError(SolverError):
    pass


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-2
    horizon: float = 1e4
    record_every: int = 500
    integrator: str = "euler"
    positivity_tolerance: float = 1e-12
    series_every: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")
        if int(self.series_every) != self.series_every or self.series_every < 1:
            raise ValueError(f"series_every must be a positive integer, got {self.series_every}")
        if self.record_every % self.series_every:
            raise ValueError("record_every must be a multiple of series_every")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.positivity_tolerance >= 0:
            raise ValueError("positivity_tolerance must be non-negative")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError(f"horizon {self.horizon} is not a whole number of steps of {self.dt}")

    @property
    def num_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @classmethod
    def paper_fidelity(cls, **overrides) -> "SolverConfig":
        """dt = 1e-4 over T = 1e4, totals kept every 100 steps."""
        kw = dict(dt=1e-4, horizon=1e4, record_every=50_000, series_every=100)
        kw.update(overrides)
        return cls(**kw)


def record_schedule(num_steps: int, every: int) -> np.ndarray:
    """Step indices that get recorded: multiples of ``every`` plus the last."""
    steps = np.arange(0, num_steps + 1, every)
    if steps[-1] != num_steps:
        steps = np.append(steps, num_steps)
    return steps


@dataclass
class Trajectory:
    """Recorded output of one run.

    ``times``/``snapshots``/``growth`` are decimated (every ``record_every``
    steps); ``series_times``/``totals``/``signal`` are kept every
    ``series_every`` steps (every step by default). The final step is always
    in both.
    """

    times: np.ndarray
    snapshots: np.ndarray
    growth: np.ndarray
    series_times: np.ndarray
    totals: np.ndarray
    signal: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_stages(self) -> int:
        return self.snapshots.shape[1]

    @property
    def final_state(self) -> State:
        return State(self.snapshots[-1], float(self.times[-1]))

    def state_at(self, index: int) -> State:
        return State(self.snapshots[index], float(self.times[index]))

    @property
    def initial_state(self) -> State:
        return self.state_at(0)

    def series_index(self, t: float) -> int:
        """Index of the last series sample at or before t."""
        return int(np.searchsorted(self.series_times, t + 1e-9 * max(1.0, abs(t)), side="right")) - 1

    def snapshot_index(self, t: float) -> int:
        return int(np.searchsorted(self.times, t + 1e-9 * max(1.0, abs(t)), side="right")) - 1


# ---------------------------------------------------------------------------
# Guards


def check_step_size(params: ModelParams, dt: float) -> float:
    """Return dt * max_rate; raise above 0.5, warn above 0.1."""
    if not dt > 0:
        raise StabilityError(f"dt must be positive, got {dt}")
    ratio = dt * max_rate(params)
    if ratio > STABILITY_LIMIT:
        raise StabilityError(
            f"dt * max_rate = {ratio:.3g} exceeds {STABILITY_LIMIT}; reduce dt below "
            f"{STABILITY_LIMIT / max_rate(params):.3g}"
        )
    if ratio > STABILITY_WARN:
        warnings.warn(f"dt * max_rate = {ratio:.3g} is above {STABILITY_WARN}", StabilityWarning, stacklevel=3)
    return ratio


def _apply_positivity(n: np.ndarray, ref: np.ndarray, tol: float, t: float):
    """Clamp tiny negatives in place; raise on larger ones. Returns clamp count."""
    neg = n < 0.0
    if not neg.any():
        return 0
    scale = np.abs(ref).max(axis=1, keepdims=True)
    floor = -tol * scale
    bad = neg & (n < floor)
    if bad.any():
        i, k = np.argwhere(bad)[0]
        raise PositivityError(
            f"density n_{i + 1} at point {k} went negative ({n[i, k]:.3g}); dt is too large", t
        )
    count = int(neg.sum())
    n[neg] = 0.0
    return count


def euler_step(
    state: State,
    params: ModelParams,
    grid: Grid,
    dt: float,
    positivity_tolerance: float = 1e-12,
    return_clamps: bool = False,
):
    check_step_size(params, dt)
    d = rhs(state, params, grid).densities
    n = state.densities + dt * d
    if not np.all(np.isfinite(n)):
        raise SolverError("non-finite density", state.time + dt)
    t_new = state.time + dt
    clamps = _apply_positivity(n, state.densities, positivity_tolerance, t_new)
    out = State(n, t_new)
    return (out, clamps) if return_clamps else out


def rk4_step(state: State, params: ModelParams, grid: Grid, dt: float) -> State:
    n0 = state.densities
    k1 = rhs(state, params, grid).densities
    k2 = rhs(State(n0 + 0.5 * dt * k1, state.time), params, grid).densities
    k3 = rhs(State(n0 + 0.5 * dt * k2, state.time), params, grid).densities
    k4 = rhs(State(n0 + dt * k3, state.time), params, grid).densities
    n = n0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return State(n, state.time + dt)


# ---------------------------------------------------------------------------
# Compiled Euler kernel

_ERR_NONE, _ERR_NEGATIVE, _ERR_NONFINITE = 0, 1, 2


@numba.njit(cache=True, nogil=True)
def _euler_kernel(n0, a, p, w, K, d, inv_eps, dt, num_steps, record_every, series_every, tol):
    M, N = n0.shape
    n_rec = num_steps // record_every + 1
    if num_steps % record_every:
        n_rec += 1
    n_ser = num_steps // series_every + 1
    if num_steps % series_every:
        n_ser += 1

    snaps = np.empty((n_rec, M, N))
    growth = np.empty((n_rec, M - 1, N))
    totals = np.empty((n_ser, M))
    signal = np.empty(n_ser)

    cur = n0.copy()
    nxt = np.empty_like(cur)
    R = np.zeros((M - 1, N))
    rho = np.empty(M)
    clamps = 0
    err = _ERR_NONE
    err_step = -1
    i_rec = 0
    i_ser = 0
    h = dt * inv_eps

    for step in range(num_steps + 1):
        for i in range(M):
            acc = 0.0
            for k in range(N):
                acc += w[k] * cur[i, k]
            rho[i] = acc
        s = 1.0 / (1.0 + K * rho[M - 1])

        last = step == num_steps
        if step % series_every == 0 or last:
            for i in range(M):
                totals[i_ser, i] = rho[i]
            signal[i_ser] = s
            i_ser += 1
        if step % record_every == 0 or last:
            snaps[i_rec] = cur
            growth[i_rec] = R
            i_rec += 1
        if last:
            break

        for k in range(N):
            inflow = 0.0
            for i in range(M - 1):
                pk = p[i, k]
                ask = a[i, k] * s
                P = (2.0 * ask - 1.0) * pk
                Q = 2.0 * (1.0 - ask) * pk
                old = cur[i, k]
                nxt[i, k] = old + h * (inflow + P * old)
                inflow = Q * old
                R[i, k] += dt * P
            old = cur[M - 1, k]
            nxt[M - 1, k] = old + h * (inflow - d * old)

        for i in range(M):
            scale = -1.0
            for k in range(N):
                v = nxt[i, k]
                if not (v >= 0.0):
                    if not np.isfinite(v):
                        err = _ERR_NONFINITE
                        err_step = step + 1
                        break
                    if scale < 0.0:
                        scale = 0.0
                        for kk in range(N):
                            if cur[i, kk] > scale:
                                scale = cur[i, kk]
                    if v < -tol * scale:
                        err = _ERR_NEGATIVE
                        err_step = step + 1
                        break
                    nxt[i, k] = 0.0
                    clamps += 1
            if err != _ERR_NONE:
                break
        if err != _ERR_NONE:
            break
        cur, nxt = nxt, cur

    return snaps, growth, totals, signal, clamps, err, err_step


# ---------------------------------------------------------------------------
# Driver


def _validate_initial(initial: State) -> None:
    n = initial.densities
    if not np.all(np.isfinite(n)):
        raise StructureError("initial densities must be finite")
    if np.any(n < 0):
        raise StructureError("initial densities must be non-negative")


def simulate(
    initial: State,
    params: ModelParams,
    grid: Grid,
    config: Optional[SolverConfig] = None,
    engine: str = "compiled",
) -> Trajectory:
    """Integrate from ``initial`` over ``config.horizon``.

    engine="compiled" runs the forward Euler kernel; engine="python" steps
    with :func:`euler_step` (or :func:`rk4_step` when the config asks for RK4).
    Reruns with identical inputs on the same engine are bit-identical; the
    two engines agree up to summation order in the totals.
    """
    config = config or SolverConfig()
    _check_pair(initial, params, grid)
    _validate_initial(initial)
    if not initial.densities.min() > 0:
        warnings.warn("initial data is not strictly positive", stacklevel=2)
    check_step_size(params, config.dt)
    if config.integrator == "rk4" and engine == "compiled":
        engine = "python"

    t0 = _time.perf_counter()
    if engine == "compiled":
        traj = _simulate_compiled(initial, params, grid, config)
    elif engine == "python":
        traj = _simulate_python(initial, params, grid, config)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    traj.meta.update(
        dt=config.dt,
        horizon=config.horizon,
        record_every=config.record_every,
        series_every=config.series_every,
        integrator=config.integrator,
        engine=engine,
        num_steps=config.num_steps,
        epsilon=params.epsilon,
        num_points=grid.num_points,
        grid_kind=grid.kind,
        wall_time=_time.perf_counter() - t0,
    )
    return traj


def _times(steps: np.ndarray, t0: float, dt: float) -> np.ndarray:
    return t0 + steps * dt


def _simulate_compiled(initial, params, grid, config) -> Trajectory:
    snaps, growth, totals, signal, clamps, err, err_step = _euler_kernel(
        np.ascontiguousarray(initial.densities),
        np.ascontiguousarray(params.self_renewal),
        np.ascontiguousarray(params.proliferation),
        np.ascontiguousarray(grid.weights),
        params.feedback_strength,
        params.clearance,
        1.0 / params.epsilon,
        config.dt,
        config.num_steps,
        int(config.record_every),
        int(config.series_every),
        config.positivity_tolerance,
    )
    if err != _ERR_NONE:
        t_fail = initial.time + err_step * config.dt
        if err == _ERR_NEGATIVE:
            raise PositivityError("density went negative beyond tolerance; dt is too large", t_fail)
        raise SolverError("non-finite density", t_fail)
    n = config.num_steps
    return Trajectory(
        times=_times(record_schedule(n, config.record_every), initial.time, config.dt),
        snapshots=snaps,
        growth=growth,
        series_times=_times(record_schedule(n, config.series_every), initial.time, config.dt),
        totals=totals,
        signal=signal,
        meta={"clamp_count": int(clamps)},
    )


def _simulate_python(initial, params, grid, config) -> Trajectory:
    n_steps = config.num_steps
    rec = set(record_schedule(n_steps, config.record_every).tolist())
    ser = set(record_schedule(n_steps, config.series_every).tolist())
    snaps, growth, totals, signal = [], [], [], []
    R = np.zeros((params.num_stages - 1, params.num_points))
    clamps = 0
    state = initial
    for step in range(n_steps + 1):
        rho = state.densities @ grid.weights
        s = feedback_signal(float(rho[-1]), params.feedback_strength)
        if step in ser:
            totals.append(rho)
            signal.append(s)
        if step in rec:
            snaps.append(state.densities)
            growth.append(R.copy())
        if step == n_steps:
            break
        R = R + config.dt * net_growth_table(params, s)
        t_next = initial.time + (step + 1) * config.dt
        if config.integrator == "euler":
            state, c = euler_step(state, params, grid, config.dt, config.positivity_tolerance, return_clamps=True)
            clamps += c
        else:
            state = rk4_step(state, params, grid, config.dt)
            n = np.array(state.densities)
            if not np.all(np.isfinite(n)):
                raise SolverError("non-finite density", t_next)
            clamps += _apply_positivity(n, n, config.positivity_tolerance, t_next)
            state = State(n, t_next)
        state = replace(state, time=t_next)
    return Trajectory(
        times=_times(record_schedule(n_steps, config.record_every), initial.time, config.dt),
        snapshots=np.array(snaps),
        growth=np.array(growth),
        series_times=_times(record_schedule(n_steps, config.series_every), initial.time, config.dt),
        totals=np.array(totals),
        signal=np.array(signal),
        meta={"clamp_count": clamps},
    )
