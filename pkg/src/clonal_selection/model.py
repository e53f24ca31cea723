"""Core model: grid, parameters, state, rate functions and the IDE right-hand side.

Densities are stored as arrays of shape ``(M, N)`` (stage by grid point) and
rate tables as ``(M - 1, N)``. Stage indices in the public helpers are
1-based to match the usual compartment numbering (1 = stem cells, M = mature
cells and blasts).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


class ModelError(Exception):
    """Base class for model errors."""


class StructureError(ModelError, ValueError):
    """Arrays of the wrong shape, or a malformed parameter set."""


class DomainError(ModelError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class AssumptionError(ModelError):
    """Parameters violate the admissibility assumptions."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(report.summary())


# ---------------------------------------------------------------------------
# Grid


@dataclass(frozen=True)
class Grid:
    """Uniform discretisation of the clone index interval [0, 1].

    ``kind="midpoint"`` places points at cell centres ``(k + 1/2) dx`` with
    ``dx = 1/N`` and equal weights ``dx``. ``kind="vertex"`` places points at
    ``k dx`` with ``dx = 1/(N - 1)`` and trapezoid weights.
    """

    num_points: int
    kind: str = "midpoint"
    points: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    cell_width: float = field(init=False, compare=False)

    def __post_init__(self):
        n = int(self.num_points)
        if self.kind == "midpoint":
            if n < 1:
                raise StructureError("midpoint grid needs at least one point")
            dx = 1.0 / n
            pts = (np.arange(n) + 0.5) * dx
            w = np.full(n, dx)
        elif self.kind == "vertex":
            if n < 2:
                raise StructureError("vertex grid needs at least two points")
            dx = 1.0 / (n - 1)
            pts = np.arange(n) * dx
            pts[-1] = 1.0
            w = np.full(n, dx)
            w[0] = w[-1] = 0.5 * dx
        else:
            raise StructureError(f"unknown grid kind {self.kind!r}")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "num_points", n)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cell_width", dx)

    @classmethod
    def midpoint(cls, num_points: int) -> "Grid":
        return cls(num_points, "midpoint")

    @classmethod
    def vertex(cls, num_points: int) -> "Grid":
        return cls(num_points, "vertex")

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature over the last axis."""
        return np.asarray(values) @ self.weights

    def nearest_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.points - x)))


# ---------------------------------------------------------------------------
# Parameters and state


@dataclass(frozen=True)
class ModelParams:
    """Sampled rate tables plus scalar parameters.

    self_renewal, proliferation: arrays of shape (M - 1, N) holding a_i(x_k)
    and p_i(x_k) (1/day). feedback_strength is K (kg/cell), clearance is d
    (1/day) and epsilon the time scale.
    """

    self_renewal: np.ndarray
    proliferation: np.ndarray
    feedback_strength: float
    clearance: float
    epsilon: float = 1.0

    def __post_init__(self):
        a = np.array(self.self_renewal, dtype=float, ndmin=2)
        p = np.array(self.proliferation, dtype=float, ndmin=2)
        if a.ndim != 2 or p.ndim != 2:
            raise StructureError("rate tables must be 2-D (stage, grid point)")
        if a.shape != p.shape:
            raise StructureError(
                f"self-renewal table shape {a.shape} != proliferation table shape {p.shape}"
            )
        if a.shape[0] < 1:
            raise StructureError("need at least two stages (one rate row)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
            raise StructureError("rate tables contain non-finite values")
        for name in ("feedback_strength", "clearance", "epsilon"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        a.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "self_renewal", a)
        object.__setattr__(self, "proliferation", p)

    @property
    def num_stages(self) -> int:
        return self.self_renewal.shape[0] + 1

    @property
    def num_points(self) -> int:
        return self.self_renewal.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            np.array_equal(self.self_renewal, other.self_renewal)
            and np.array_equal(self.proliferation, other.proliferation)
            and self.feedback_strength == other.feedback_strength
            and self.clearance == other.clearance
            and self.epsilon == other.epsilon
        )

    __hash__ = None

    def check_grid(self, grid: Grid) -> None:
        if self.num_points != grid.num_points:
            raise StructureError(
                f"rate tables have {self.num_points} points, grid has {grid.num_points}"
            )


@dataclass(frozen=True)
class State:
    """Densities n_i(t, x_k), shape (M, N), in cells/kg per unit x."""

    densities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        n = np.array(self.densities, dtype=float, ndmin=2)
        if n.ndim != 2:
            raise StructureError("densities must be 2-D (stage, grid point)")
        n.flags.writeable = False
        object.__setattr__(self, "densities", n)
        object.__setattr__(self, "time", float(self.time))

    @property
    def num_stages(self) -> int:
        return self.densities.shape[0]

    def is_valid(self) -> bool:
        n = self.densities
        return bool(np.all(np.isfinite(n)) and np.all(n >= 0.0))

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.time == other.time and np.array_equal(self.densities, other.densities)

    __hash__ = None


@dataclass(frozen=True)
class DensityTotals:
    totals: np.ndarray
    signal: float


def _check_pair(state: State, params: ModelParams, grid: Optional[Grid] = None) -> None:
    if state.densities.shape != (params.num_stages, params.num_points):
        raise StructureError(
            f"state shape {state.densities.shape} does not match parameters "
            f"({params.num_stages}, {params.num_points})"
        )
    if grid is not None:
        params.check_grid(grid)


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass(frozen=True)
class Violation:
    rule: str
    stage: int
    index: int
    value: float
    message: str


@dataclass
class ValidationReport:
    errors: List[Violation] = field(default_factory=list)
    warnings: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self):
        return len(self.errors)

    def __iter__(self):
        return iter(self.errors)

    def summary(self, limit: int = 5) -> str:
        if self.ok:
            return "all assumptions hold"
        lines = [f"{len(self.errors)} assumption violation(s)"]
        lines += ["  " + v.message for v in self.errors[:limit]]
        if len(self.errors) > limit:
            lines.append(f"  ... and {len(self.errors) - limit} more")
        return "\n".join(lines)


def validate_assumptions(
    params: ModelParams,
    grid: Optional[Grid] = None,
    check_proliferation_order: bool = True,
) -> ValidationReport:
    """Pointwise check of the admissibility conditions on the rate tables.

    Errors: 1/2 < a_i < 1, 0 < p_i < 1 (open bounds, equality rejected) and
    a_i < a_1 for i >= 2. The stem/progenitor ordering p_1 <= p_2 is only a
    warning since it belongs to one calibration, not to the model.

    Raises StructureError if the tables do not match ``grid``.
    """
    if grid is not None:
        params.check_grid(grid)
    a, p = params.self_renewal, params.proliferation
    report = ValidationReport()

    def flag(rule, i, k, v, msg, warn=False):
        (report.warnings if warn else report.errors).append(
            Violation(rule, i + 1, int(k), float(v), f"stage {i + 1}, point {k}: {msg} (value {v!r})")
        )

    for i in range(a.shape[0]):
        for k in np.flatnonzero(~((a[i] > 0.5) & (a[i] < 1.0))):
            flag("self_renewal_range", i, k, a[i, k], "self-renewal fraction outside (1/2, 1)")
        for k in np.flatnonzero(~((p[i] > 0.0) & (p[i] < 1.0))):
            flag("proliferation_range", i, k, p[i, k], "proliferation rate outside (0, 1)/day")
        if i >= 1:
            for k in np.flatnonzero(~(a[i] < a[0])):
                flag("stem_cell_dominance", i, k, a[i, k], f"a_{i + 1} >= a_1 = {a[0, k]!r}")
    if check_proliferation_order and a.shape[0] >= 2:
        for k in np.flatnonzero(p[0] > p[1]):
            flag("proliferation_order", 0, k, p[0, k], f"p_1 > p_2 = {p[1, k]!r}", warn=True)
    return report


# ---------------------------------------------------------------------------
# Rates


def feedback_signal(rho_M, K: float):
    """s = 1 / (1 + K rho_M). Works on scalars and arrays."""
    if K <= 0:
        raise DomainError(f"K must be positive, got {K}")
    rho = np.asarray(rho_M, dtype=float)
    if np.any(rho < 0) or np.any(np.isnan(rho)):
        raise DomainError(f"rho_M must be non-negative, got {rho_M}")
    s = 1.0 / (1.0 + K * rho)
    return float(s) if s.ndim == 0 else s


def _rate_row(params: ModelParams, i: int) -> int:
    M = params.num_stages
    if not 1 <= i <= M - 1:
        raise DomainError(f"stage {i} has no division rates (valid stages 1..{M - 1})")
    return i - 1


def _check_signal(s: float) -> None:
    if not 0.0 < s <= 1.0:
        raise DomainError(f"signal must lie in (0, 1], got {s}")


def net_growth(i: int, k: int, s: float, params: ModelParams) -> float:
    """P_i = (2 a_i s - 1) p_i at grid point k, 1/day."""
    r = _rate_row(params, i)
    _check_signal(s)
    return (2.0 * params.self_renewal[r, k] * s - 1.0) * params.proliferation[r, k]


def differentiation_outflux(i: int, k: int, s: float, params: ModelParams) -> float:
    """Q_i = 2 (1 - a_i s) p_i at grid point k, 1/day."""
    r = _rate_row(params, i)
    _check_signal(s)
    return 2.0 * (1.0 - params.self_renewal[r, k] * s) * params.proliferation[r, k]


def net_growth_table(params: ModelParams, s: float) -> np.ndarray:
    """All P_i(x_k) at signal s, shape (M - 1, N)."""
    return (2.0 * params.self_renewal * s - 1.0) * params.proliferation


def outflux_table(params: ModelParams, s: float) -> np.ndarray:
    """All Q_i(x_k) at signal s, shape (M - 1, N)."""
    return 2.0 * (1.0 - params.self_renewal * s) * params.proliferation


def max_rate(params: ModelParams) -> float:
    """Signal-independent bound on every per-capita rate of the system.

    |P_i| <= p_i and Q_i <= 2 p_i for any s in (0, 1], so 2 max p together
    with d bounds all rates (before the 1/epsilon scaling).
    """
    return max(2.0 * float(params.proliferation.max()), params.clearance) / params.epsilon


# ---------------------------------------------------------------------------
# Quadrature and right-hand side


def total_density(state: State, i: int, grid: Grid) -> float:
    """rho_i = integral of n_i over [0, 1] (1-based stage index)."""
    if not 1 <= i <= state.num_stages:
        raise DomainError(f"stage {i} out of range 1..{state.num_stages}")
    row = state.densities[i - 1]
    if row.shape[0] != grid.num_points:
        raise StructureError("state does not match grid")
    return float(row @ grid.weights)


def density_totals(state: State, grid: Grid, K: float) -> DensityTotals:
    if state.densities.shape[1] != grid.num_points:
        raise StructureError("state does not match grid")
    rho = state.densities @ grid.weights
    return DensityTotals(totals=rho, signal=feedback_signal(rho[-1], K))


def rhs(state: State, params: ModelParams, grid: Grid) -> State:
    """Time derivative of the densities, divided by epsilon.

    The feedback signal is evaluated once from rho_M of ``state``. The
    returned State carries the input time.
    """
    _check_pair(state, params, grid)
    n = state.densities
    s = feedback_signal(float(n[-1] @ grid.weights), params.feedback_strength)
    P = net_growth_table(params, s)
    Q = outflux_table(params, s)
    dn = np.empty_like(n)
    dn[0] = P[0] * n[0]
    for i in range(1, n.shape[0] - 1):
        dn[i] = Q[i - 1] * n[i - 1] + P[i] * n[i]
    dn[-1] = Q[-1] * n[-2] - params.clearance * n[-1]
    if params.epsilon != 1.0:
        dn /= params.epsilon
    return State(dn, state.time)
