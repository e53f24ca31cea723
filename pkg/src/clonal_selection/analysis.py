"""Numerical checks of the selection results on simulated trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from .model import DomainError, Grid, ModelParams, State, net_growth_table
from .solver import Trajectory


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Growth integrals


@dataclass(frozen=True)
class GrowthIntegrals:
    """R_i(t, x_k) = time integral of P_i along the run, shape (M - 1, N)."""

    R: np.ndarray
    time: float = 0.0

    @classmethod
    def zeros(cls, params: ModelParams, time: float = 0.0) -> "GrowthIntegrals":
        return cls(np.zeros((params.num_stages - 1, params.num_points)), time)


def accumulate_growth(integrals: GrowthIntegrals, signal: float, params: ModelParams, dt: float) -> GrowthIntegrals:
    """Left-endpoint update R += dt * P(s), with s the signal at the start of the step."""
    return GrowthIntegrals(integrals.R + dt * net_growth_table(params, signal), integrals.time + dt)


@dataclass
class TheoremSignReport:
    window: Tuple[float, float]
    rates: np.ndarray  # windowed mean increment of R_i per day, shape (M - 1, N)
    max_rates: np.ndarray  # max over x, per stage
    stationary_tol: float
    negative_tol: float

    @property
    def stem_ok(self) -> bool:
        return abs(self.max_rates[0]) <= self.stationary_tol

    @property
    def progenitor_ok(self) -> bool:
        return bool(np.all(self.max_rates[1:] <= self.negative_tol))

    @property
    def passed(self) -> bool:
        return self.stem_ok and self.progenitor_ok


def check_theorem_signs(
    trajectory: Trajectory,
    window: Tuple[float, float],
    stationary_tol: float = 1e-3,
    negative_tol: float = -1e-2,
) -> TheoremSignReport:
    """Windowed form of the sign structure of the growth integrals.

    Over the window, max_x of the mean increment of R_1 should vanish (its
    magnitude below ``stationary_tol`` per day) and max_x of the mean
    increment of R_i, i >= 2, should be below ``negative_tol`` per day.
    Window ends are snapped to recorded snapshot times.
    """
    t0, t1 = map(float, window)
    times = trajectory.times
    if not t1 > t0:
        raise AnalysisError(f"window must have positive length, got [{t0}, {t1}]")
    eps = 1e-9 * max(1.0, abs(times[-1]))
    if t0 < times[0] - eps or t1 > times[-1] + eps:
        raise AnalysisError(f"window [{t0}, {t1}] outside the recorded range [{times[0]}, {times[-1]}]")
    i0 = int(np.argmin(np.abs(times - t0)))
    i1 = int(np.argmin(np.abs(times - t1)))
    if i1 <= i0:
        raise AnalysisError("window shorter than the snapshot spacing")
    span = times[i1] - times[i0]
    rates = (trajectory.growth[i1] - trajectory.growth[i0]) / span
    return TheoremSignReport(
        window=(float(times[i0]), float(times[i1])),
        rates=rates,
        max_rates=rates.max(axis=1),
        stationary_tol=stationary_tol,
        negative_tol=negative_tol,
    )


# ---------------------------------------------------------------------------
# Concentration


@dataclass(frozen=True)
class Window:
    center: float
    half_width: float
    fraction: float


@dataclass
class ConcentrationReport:
    stage: int
    windows: List[Window]
    argmax_density: float
    argmax_selfrenewal: Tuple[float, ...]
    full_support: bool
    min_over_max: float

    @property
    def total_fraction(self) -> float:
        return float(sum(w.fraction for w in self.windows))

    def fraction_at(self, center: float) -> float:
        for w in self.windows:
            if math.isclose(w.center, center, abs_tol=1e-12):
                return w.fraction
        raise KeyError(center)


def window_fraction(values: np.ndarray, grid: Grid, center: float, half_width: float) -> float:
    """Share of the integral of ``values`` carried by |x - center| <= half_width."""
    total = float(values @ grid.weights)
    if total <= 0:
        return 0.0
    mask = np.abs(grid.points - center) <= half_width * (1 + 1e-12) + 1e-15
    return float(values[mask] @ grid.weights[mask]) / total


def selfrenewal_maxima(params: ModelParams, grid: Grid, rel_tol: float = 1e-3) -> Tuple[float, ...]:
    """Local maxima of the a_1 table within rel_tol of its global maximum.

    Each peak location is refined by the vertex of the parabola through the
    peak cell and its neighbours, so a maximum sitting on a cell face (two
    cells nearly tied) is reported at the face rather than at either cell.
    """
    a1 = params.self_renewal[0]
    top = a1.max()
    if np.ptp(a1) <= 1e-12 * top:
        return ()
    x = grid.points
    peaks, props = find_peaks(np.concatenate(([-np.inf], a1, [-np.inf])), plateau_size=1)
    out = []
    for left, right in zip(props["left_edges"] - 1, props["right_edges"] - 1):
        if a1[left] < top - rel_tol * abs(top):
            continue
        if left != right or left == 0 or left == len(a1) - 1:
            out.append(float(0.5 * (x[left] + x[right])))
            continue
        fm, f0, fp = a1[left - 1], a1[left], a1[left + 1]
        curv = fm - 2.0 * f0 + fp
        shift = 0.5 * (fm - fp) / curv if curv < 0 else 0.0
        out.append(float(x[left] + shift * grid.cell_width))
    # neighbours equal up to round-off form an unresolved plateau
    merged = []
    for v in out:
        if merged and v - merged[-1] <= 1.5 * grid.cell_width:
            merged[-1] = 0.5 * (merged[-1] + v)
        else:
            merged.append(v)
    return tuple(merged)


def concentration_report(
    state: State,
    params: ModelParams,
    grid: Grid,
    half_width: float = 0.05,
    stage: int = 1,
    centers: Optional[Sequence[float]] = None,
    threshold: float = 1e-12,
) -> ConcentrationReport:
    """Mass fractions of n_stage near the maxima of the stem-cell self-renewal."""
    if half_width < grid.cell_width * (1 - 1e-12):
        raise AnalysisError(f"half width {half_width} is below the grid spacing {grid.cell_width}")
    n = state.densities[stage - 1]
    a1 = params.self_renewal[0]
    if centers is None:
        centers = selfrenewal_maxima(params, grid)
    windows = [Window(float(c), half_width, window_fraction(n, grid, c, half_width)) for c in centers]
    top = n.max()
    ties = np.flatnonzero(a1 >= a1.max() - 1e-12 * abs(a1.max()))
    return ConcentrationReport(
        stage=stage,
        windows=windows,
        argmax_density=float(grid.points[int(np.argmax(n))]),
        argmax_selfrenewal=tuple(float(x) for x in grid.points[ties]),
        full_support=bool(top > 0 and np.all(n > threshold * top)),
        min_over_max=float(n.min() / top) if top > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# A-priori bounds


@dataclass
class BoundEstimates:
    """Constants of the uniform upper bounds on the totals.

    ``rho_bar`` has one entry per stage. Stage 1 uses the closed form; the
    intermediate stages use an explicit choice of the decay constant (see
    :func:`bound_estimates`), and stage M follows from stage M - 1.
    """

    P_bar: np.ndarray
    Q_under: np.ndarray
    ratio_bounds: np.ndarray
    products: np.ndarray
    rho_bar: List[Optional[float]]
    decay_constants: List[Optional[float]] = field(default_factory=list)


def bound_estimates(params: ModelParams, initial: State) -> BoundEstimates:
    """Constants for rho_i/rho_{i+1} <= B_i and rho_i <= rho_bar_i.

    B_1..B_{M-1} follow the ratio recursion (the last one with the clearance
    term), A_i is the product of B_i..B_{M-1}. For the intermediate stages the
    existence argument is made constructive: above the level
    L_i = 2 (A_i / K)(2 max a_i - 1) the net growth of stage i is at most
    -c_i with c_i = (1 - 2 max a_i / (1 + K L_i / A_i)) inf p_i, which gives
    rho_bar_i = max(sup n_i^0, L_i, 2 max p_{i-1} rho_bar_{i-1} / c_i).
    """
    M = params.num_stages
    n0 = initial.densities
    if n0.shape[0] != M:
        raise AnalysisError("initial state does not match parameters")
    sup0 = n0.max(axis=1)
    if np.any(sup0 <= 0):
        raise DomainError("initial densities must be positive in every compartment")
    a, p = params.self_renewal, params.proliferation
    K, d = params.feedback_strength, params.clearance
    a_sup = a.max(axis=1)
    p_sup = p.max(axis=1)
    p_inf = p.min(axis=1)
    P_bar = 2.0 * a_sup * p_sup
    Q_under = 2.0 * (1.0 - a_sup) * p_inf

    B = np.empty(M - 1)
    for j in range(M - 1):  # B_{j+1}: ratio of stage j+1 to stage j+2
        inflow = 2.0 * p_sup[j - 1] * B[j - 1] if j >= 1 else 0.0
        outflow = d if j == M - 2 else p_sup[j + 1]
        B[j] = max(sup0[j] / sup0[j + 1], (inflow + P_bar[j] + outflow) / Q_under[j])
    A = np.array([np.prod(B[j:]) for j in range(M - 1)])

    rho_bar: List[Optional[float]] = [None] * M
    decay: List[Optional[float]] = [None] * M
    rho_bar[0] = max(sup0[0], A[0] / K * (2.0 * a_sup[0] - 1.0))
    for j in range(1, M - 1):
        level = 2.0 * A[j] / K * (2.0 * a_sup[j] - 1.0)
        c = (1.0 - 2.0 * a_sup[j] / (1.0 + K * level / A[j])) * p_inf[j]
        decay[j] = c
        rho_bar[j] = max(sup0[j], level, 2.0 * p_sup[j - 1] * rho_bar[j - 1] / c)
    rho_bar[M - 1] = max(sup0[M - 1], 2.0 / d * p_sup[M - 2] * rho_bar[M - 2])
    return BoundEstimates(P_bar, Q_under, B, A, [float(v) for v in rho_bar], decay)


@dataclass(frozen=True)
class BoundViolation:
    time: float
    kind: str  # "ratio" or "total"
    stage: int
    value: float
    bound: float


def check_bounds(trajectory: Trajectory, bounds: BoundEstimates, limit: Optional[int] = None) -> List[BoundViolation]:
    """Check every sample of the totals series against the bounds."""
    rho = trajectory.totals
    t = trajectory.series_times
    out: List[BoundViolation] = []
    M = rho.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(M - 1):
            ratio = rho[:, j] / rho[:, j + 1]
            for k in np.flatnonzero(~(ratio <= bounds.ratio_bounds[j])):
                out.append(BoundViolation(float(t[k]), "ratio", j + 1, float(ratio[k]), float(bounds.ratio_bounds[j])))
                if limit is not None and len(out) >= limit:
                    return out
    for j, bar in enumerate(bounds.rho_bar):
        if bar is None:
            continue
        for k in np.flatnonzero(~(rho[:, j] <= bar)):
            out.append(BoundViolation(float(t[k]), "total", j + 1, float(rho[k, j]), float(bar)))
            if limit is not None and len(out) >= limit:
                return out
    return out


# ---------------------------------------------------------------------------
# Single-clone equilibrium


def steady_state_predictor(a1: float, a2: float, p1: float, p2: float, K: float, d: float):
    """Positive equilibrium (rho_1, rho_2, rho_3) of a single three-stage clone.

    Stem-cell balance fixes the signal at 1 / (2 a1); the other two balances
    then determine the totals.
    """
    if not a1 > 0.5:
        raise DomainError(f"a1 = {a1} <= 1/2: no positive equilibrium")
    rho3 = (2.0 * a1 - 1.0) / K
    ratio = a2 / a1
    rho2 = d * rho3 / ((2.0 - ratio) * p2)
    rho1 = rho2 * (1.0 - ratio) * p2 / p1
    return rho1, rho2, rho3


# ---------------------------------------------------------------------------
# Oscillations


@dataclass
class OscillationReport:
    classification: str  # converged, damped or sustained
    peak_times: np.ndarray
    period: float
    period_cv: float
    amplitude: float
    mean: float

    @property
    def num_peaks(self) -> int:
        return len(self.peak_times)


def detect_oscillations(
    times: np.ndarray,
    series: np.ndarray,
    window: Optional[Tuple[float, float]] = None,
    prominence: float = 0.01,
    amplitude_floor: float = 0.05,
    min_peaks: int = 5,
) -> OscillationReport:
    """Classify a scalar time series over ``window``.

    Peaks need a prominence of at least ``prominence`` times the window mean.
    Sustained: at least ``min_peaks`` peaks, relative peak-to-trough amplitude
    of at least ``amplitude_floor`` and no decay (late peaks keep at least half
    the prominence of early ones). Converged: no peaks. Damped: anything else.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if times.shape != series.shape or times.ndim != 1:
        raise AnalysisError("times and series must be matching 1-D arrays")
    if window is None:
        window = (times[0], times[-1])
    t0, t1 = window
    mask = (times >= t0 - 1e-9) & (times <= t1 + 1e-9)
    ts, ys = times[mask], series[mask]
    if len(ts) < 3:
        raise AnalysisError("window holds fewer than three samples")
    dt = float(np.min(np.diff(ts)))
    if ts[-1] - ts[0] < 10 * 20 * dt:
        raise AnalysisError(f"window of {ts[-1] - ts[0]:.3g} days is shorter than 200 samples")

    mean = float(ys.mean())
    scale = abs(mean) if mean != 0 else 1.0
    amplitude = float((ys.max() - ys.min()) / scale)
    idx, props = find_peaks(ys, prominence=prominence * scale)
    peak_times = ts[idx]
    if len(idx) >= 2:
        gaps = np.diff(peak_times)
        period = float(gaps.mean())
        cv = float(gaps.std() / period) if len(gaps) > 1 else 0.0
    else:
        period, cv = math.nan, math.nan

    if len(idx) == 0:
        label = "converged"
    else:
        prom = props["prominences"]
        third = max(1, len(prom) // 3)
        decaying = prom[-third:].mean() < 0.5 * prom[:third].mean()
        if len(idx) >= min_peaks and amplitude >= amplitude_floor and not decaying:
            label = "sustained"
        else:
            label = "damped"
    return OscillationReport(label, peak_times, period, cv, amplitude, mean)


def oscillation_reports(trajectory: Trajectory, window: Optional[Tuple[float, float]] = None, **kw) -> List[OscillationReport]:
    """One report per compartment from the totals series."""
    return [
        detect_oscillations(trajectory.series_times, trajectory.totals[:, i], window, **kw)
        for i in range(trajectory.totals.shape[1])
    ]
