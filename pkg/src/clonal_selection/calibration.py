"""Ready-to-run parameter presets.

Two calibrations with three stages (stem cells, progenitors, mature
cells/blasts). The first comes in three flavours of the stem-cell
self-renewal profile a_1(x): one maximum at x = 0.6 (``cal1-single``), four
narrow maxima (``cal1-multi``) and a constant (``cal1-flat``). The second
(``cal2-hopf``) uses fast stem cells and slow clearance, for which the
totals oscillate.

Rate profiles are described by small frozen dataclasses so that a preset can
be written out to a config file and read back without loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .model import Grid, ModelParams, State, StructureError, validate_assumptions
from .solver import SolverConfig

FEEDBACK_K = 1.75e-9
INITIAL_WIDTH = 0.2
BUMP_CENTERS = (0.35, 0.55, 0.7, 0.85)
BUMP_WIDTH = 0.0025

PRESET_NAMES = ("cal1-single", "cal1-multi", "cal1-flat", "cal2-hopf")


class PresetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Rate profiles


@dataclass(frozen=True)
class Constant:
    value: float
    kind = "constant"

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def maxima(self):
        return ()


@dataclass(frozen=True)
class Linear:
    """intercept + slope * x"""

    intercept: float
    slope: float
    kind = "linear"

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def maxima(self):
        return ()


@dataclass(frozen=True)
class Gaussian:
    """scale * (amplitude * exp(-(x - center)^2 / width) + offset)"""

    center: float
    width: float
    amplitude: float = 1.0
    offset: float = 0.0
    scale: float = 1.0
    kind = "gaussian"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * (self.amplitude * np.exp(-((x - self.center) ** 2) / self.width) + self.offset)

    def maxima(self):
        return (self.center,) if self.amplitude * self.scale > 0 else ()


@dataclass(frozen=True)
class Bumps:
    """base + height * sum_j exp(-(x - c_j)^2 / width).

    With ``anchor`` set, base is chosen so that the profile equals ``anchor``
    at x = 0.
    """

    centers: Tuple[float, ...]
    width: float
    height: float
    anchor: Optional[float] = None
    base: Optional[float] = None
    kind = "bumps"

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        if (self.anchor is None) == (self.base is None):
            raise PresetError("bumps profile needs exactly one of anchor or base")

    @property
    def offset(self) -> float:
        if self.base is not None:
            return self.base
        c = np.asarray(self.centers)
        return self.anchor - self.height * float(np.sum(np.exp(-(c**2) / self.width)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.centers)
        return self.offset + self.height * np.exp(-((x[..., None] - c) ** 2) / self.width).sum(axis=-1)

    def maxima(self):
        return self.centers if self.height > 0 else ()


RateFunction = Union[Constant, Linear, Gaussian, Bumps]
RATE_KINDS = {cls.kind: cls for cls in (Constant, Linear, Gaussian, Bumps)}


@dataclass(frozen=True)
class ModelSpec:
    """Analytic description of a model: rate profiles, scalars, initial data.

    Initial data are ``amplitude_i * exp(-x^2 / initial_width)``.
    """

    self_renewal: Tuple[RateFunction, ...]
    proliferation: Tuple[RateFunction, ...]
    initial_amplitudes: Tuple[float, ...]
    feedback_strength: float = FEEDBACK_K
    clearance: float = 2.0
    epsilon: float = 1.0
    initial_width: float = INITIAL_WIDTH

    def __post_init__(self):
        object.__setattr__(self, "self_renewal", tuple(self.self_renewal))
        object.__setattr__(self, "proliferation", tuple(self.proliferation))
        object.__setattr__(self, "initial_amplitudes", tuple(float(v) for v in self.initial_amplitudes))
        m = len(self.initial_amplitudes)
        if m < 2 or len(self.self_renewal) != m - 1 or len(self.proliferation) != m - 1:
            raise PresetError(
                f"{m} stages need {m - 1} self-renewal and proliferation profiles, got "
                f"{len(self.self_renewal)} and {len(self.proliferation)}"
            )

    @property
    def num_stages(self) -> int:
        return len(self.initial_amplitudes)

    def params(self, grid: Grid) -> ModelParams:
        x = grid.points
        return ModelParams(
            self_renewal=np.array([f(x) for f in self.self_renewal]),
            proliferation=np.array([f(x) for f in self.proliferation]),
            feedback_strength=self.feedback_strength,
            clearance=self.clearance,
            epsilon=self.epsilon,
        )

    def initial_state(self, grid: Grid) -> State:
        shape = np.exp(-grid.points**2 / self.initial_width)
        return State(np.array([amp * shape for amp in self.initial_amplitudes]), 0.0)

    def stem_maxima(self) -> Tuple[float, ...]:
        return tuple(self.self_renewal[0].maxima())

    def progenitor_maxima(self) -> Tuple[float, ...]:
        return tuple(self.self_renewal[1].maxima()) if len(self.self_renewal) > 1 else ()


# ---------------------------------------------------------------------------
# The calibrations

CAL1_A2 = Gaussian(center=0.4, width=8.82, amplitude=0.5, offset=0.349)
CAL1_A1_SINGLE = Gaussian(center=0.6, width=9.68, amplitude=1.0, offset=-0.1135)
CAL1_A1_MULTI = Bumps(centers=BUMP_CENTERS, width=BUMP_WIDTH, height=0.1, anchor=0.85)
CAL1_A1_FLAT = Constant(0.88)
CAL1_P = (Linear(0.1, 0.2), Linear(0.4, 0.5))
CAL1_N = (2.5e7, 3.8e9, 1e8)

CAL2_A1 = Gaussian(center=0.6, width=9.68, amplitude=1.0, offset=-0.1135, scale=0.7 / 0.8865)
CAL2_A2 = Gaussian(center=0.4, width=8.82, amplitude=0.5, offset=0.349, scale=0.6 / 0.8467)
CAL2_P = (Linear(0.975, 0.025), Linear(0.04, 0.0333))
CAL2_N = (4.37e6, 5e8, 4.28e8)


def model_spec(name: str) -> ModelSpec:
    if name == "cal1-single":
        return ModelSpec((CAL1_A1_SINGLE, CAL1_A2), CAL1_P, CAL1_N, clearance=2.0)
    if name == "cal1-multi":
        return ModelSpec((CAL1_A1_MULTI, CAL1_A2), CAL1_P, CAL1_N, clearance=2.0)
    if name == "cal1-flat":
        return ModelSpec((CAL1_A1_FLAT, CAL1_A2), CAL1_P, CAL1_N, clearance=2.0)
    if name == "cal2-hopf":
        return ModelSpec((CAL2_A1, CAL2_A2), CAL2_P, CAL2_N, clearance=0.15)
    raise PresetError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


@dataclass(frozen=True)
class Expectation:
    regime: str  # "equilibrium" or "oscillation"
    selected: Tuple[float, ...]  # empty: no selection expected
    progenitor_max: Tuple[float, ...]


EXPECTATIONS: Dict[str, Expectation] = {
    "cal1-single": Expectation("equilibrium", (0.6,), (0.4,)),
    "cal1-multi": Expectation("equilibrium", BUMP_CENTERS, (0.4,)),
    "cal1-flat": Expectation("equilibrium", (), (0.4,)),
    "cal2-hopf": Expectation("oscillation", (0.6,), (0.4,)),
}


@dataclass
class Preset:
    name: str
    grid: Grid
    spec: ModelSpec
    params: ModelParams
    initial: State
    solver_defaults: SolverConfig
    expected: Expectation
    warnings: list = field(default_factory=list)


def alignment_offsets(spec: ModelSpec, grid: Grid) -> Dict[float, float]:
    """Distance from every analytic maximum to the nearest grid feature.

    On a midpoint grid the feature is a cell face (so the maximum is shared
    symmetrically by two cells); on a vertex grid it is a grid point.
    """
    if grid.kind == "midpoint":
        features = np.arange(grid.num_points + 1) * grid.cell_width
    else:
        features = grid.points
    out = {}
    for x in spec.stem_maxima() + spec.progenitor_maxima():
        out[x] = float(np.min(np.abs(features - x)))
    return out


def is_aligned(spec: ModelSpec, grid: Grid) -> bool:
    tol = 1e-9 * grid.cell_width
    return all(v <= tol for v in alignment_offsets(spec, grid).values())


def build_spec(
    spec: ModelSpec,
    grid: Grid,
    name: str = "custom",
    solver_defaults: Optional[SolverConfig] = None,
    expected: Optional[Expectation] = None,
    strict: bool = True,
) -> Preset:
    """Sample a model description on ``grid`` and validate it."""
    notes = []
    if not is_aligned(spec, grid):
        msg = (
            f"grid ({grid.kind}, {grid.num_points} points) does not place the rate maxima "
            f"{sorted(alignment_offsets(spec, grid))} on grid features; use a point count divisible by 20"
        )
        if strict:
            raise PresetError(msg)
        notes.append(msg)
    params = spec.params(grid)
    report = validate_assumptions(params, grid)
    if not report.ok:
        raise PresetError(f"preset {name!r} violates the model assumptions:\n{report.summary()}")
    notes += [v.message for v in report.warnings[:1]]
    if len(report.warnings) > 1:
        notes.append(f"p_1 > p_2 at {len(report.warnings)} grid points")
    initial = spec.initial_state(grid)
    if not np.all(initial.densities > 0):
        raise PresetError("initial data must be strictly positive on the grid")
    if expected is None:
        expected = Expectation("equilibrium", spec.stem_maxima(), spec.progenitor_maxima())
    return Preset(
        name=name,
        grid=grid,
        spec=spec,
        params=params,
        initial=initial,
        solver_defaults=solver_defaults or SolverConfig(),
        expected=expected,
        warnings=notes,
    )


def build_preset(name: str, grid: Optional[Grid] = None, strict: bool = True) -> Preset:
    """Build one of :data:`PRESET_NAMES` on ``grid`` (default 200 midpoint cells).

    Raises PresetError for an unknown name or, when ``strict``, for a grid
    that cannot place the rate maxima on cell faces.
    """
    spec = model_spec(name)
    grid = grid or Grid.midpoint(200)
    return build_spec(spec, grid, name=name, expected=EXPECTATIONS[name], strict=strict)


def predicted_equilibrium_totals(spec: ModelSpec, x: float):
    """Single-clone equilibrium of a three-stage spec at clone index x."""
    from .analysis import steady_state_predictor

    a1, a2 = (float(f(x)) for f in spec.self_renewal)
    p1, p2 = (float(f(x)) for f in spec.proliferation)
    return steady_state_predictor(a1, a2, p1, p2, spec.feedback_strength, spec.clearance)

