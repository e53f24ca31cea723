"""Run configuration: a line-oriented ``key = value`` format.

Blank lines and ``#`` comments are ignored. Keys are dotted; a run names
either a preset::

    preset = cal1-single
    solver.dt = 0.01

or spells the model out inline::

    model.stages = 3
    model.K = 1.75e-9
    model.d = 0.15
    model.n1 = 4.37e6
    model.a1.kind = gaussian
    model.a1.center = 0.6
    ...

Profile kinds and their keys: ``constant`` (value), ``linear`` (intercept,
slope), ``gaussian`` (center, width, amplitude, offset, scale) and ``bumps``
(centers, width, height, anchor or base).
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .calibration import (
    PRESET_NAMES,
    RATE_KINDS,
    ModelSpec,
    PresetError,
    build_spec,
    model_spec,
)
from .model import Grid, ModelError
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None, key: Optional[str] = None):
        self.line, self.column, self.key = line, column, key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class RunConfig:
    preset: Optional[str] = None
    model: Optional[ModelSpec] = None
    grid: int = 200
    grid_kind: str = "midpoint"
    dt: float = 1e-2
    horizon: float = 1e4
    record_every: int = 500
    series_every: int = 1
    integrator: str = "euler"
    paper_fidelity: bool = False
    out_dir: str = "out"
    totals_every: int = 100
    heatmap_every: int = 4
    delta: float = 0.05
    theorem_window: float = 0.25
    support_threshold: float = 1e-12
    oscillation_window: float = 0.5
    prominence: float = 0.01
    amplitude_floor: float = 0.05

    def model_spec(self) -> ModelSpec:
        return self.model if self.model is not None else model_spec(self.preset)

    @property
    def name(self) -> str:
        return self.preset or "custom"

    def make_grid(self) -> Grid:
        if self.paper_fidelity:
            return Grid(1000, self.grid_kind)
        return Grid(self.grid, self.grid_kind)

    def solver_config(self) -> SolverConfig:
        if self.paper_fidelity:
            return SolverConfig.paper_fidelity(horizon=self.horizon, integrator=self.integrator)
        return SolverConfig(
            dt=self.dt,
            horizon=self.horizon,
            record_every=self.record_every,
            series_every=self.series_every,
            integrator=self.integrator,
        )


# key -> (field name, type)
_SCALARS: Dict[str, Tuple[str, type]] = {
    "preset": ("preset", str),
    "grid": ("grid", int),
    "grid.kind": ("grid_kind", str),
    "solver.dt": ("dt", float),
    "solver.horizon": ("horizon", float),
    "solver.record_every": ("record_every", int),
    "solver.series_every": ("series_every", int),
    "solver.integrator": ("integrator", str),
    "solver.paper_fidelity": ("paper_fidelity", bool),
    "output.dir": ("out_dir", str),
    "output.totals_every": ("totals_every", int),
    "output.heatmap_every": ("heatmap_every", int),
    "analysis.delta": ("delta", float),
    "analysis.theorem_window": ("theorem_window", float),
    "analysis.support_threshold": ("support_threshold", float),
    "analysis.oscillation_window": ("oscillation_window", float),
    "analysis.prominence": ("prominence", float),
    "analysis.amplitude_floor": ("amplitude_floor", float),
}
_MODEL_SCALARS = {
    "model.stages": ("stages", int),
    "model.K": ("feedback_strength", float),
    "model.d": ("clearance", float),
    "model.epsilon": ("epsilon", float),
    "model.initial_width": ("initial_width", float),
}
_KEY_RE = re.compile(r"[A-Za-z0-9_.\-]+")
_AMP_RE = re.compile(r"model\.n(\d+)$")
_RATE_RE = re.compile(r"model\.([ap])(\d+)\.(\w+)$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(raw: str, typ: type, key: str, line: int):
    try:
        if typ is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {typ.__name__}", line=line, key=key) from None


def _tokenize(text: str):
    """Yield (line number, key, value, key column) for each entry."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body.rstrip()) + 1
            raise ConfigError("expected 'key = value'", line=lineno, column=col)
        lhs, value = body.split("=", 1)
        key = lhs.strip()
        key_col = len(lhs) - len(lhs.lstrip()) + 1
        if not key:
            raise ConfigError("missing key before '='", line=lineno, column=key_col)
        m = _KEY_RE.match(key)
        end = m.end() if m else 0
        if end != len(key):
            bad = end + key_col
            raise ConfigError(f"invalid character in key {key!r}", line=lineno, column=bad)
        value = value.strip()
        if not value:
            raise ConfigError("missing value after '='", line=lineno, column=len(body.rstrip()) + 1, key=key)
        yield lineno, key, value, key_col


def parse_config(text: str) -> RunConfig:
    """Parse config text into a validated RunConfig.

    Syntax problems raise ConfigError with line and column; unknown keys and
    bad values raise it with line and key.
    """
    values = {}
    model_vals = {}
    amps: Dict[int, Tuple[float, int]] = {}
    rates: Dict[Tuple[str, int], Dict[str, Tuple[str, int]]] = {}
    seen: Dict[str, int] = {}

    for lineno, key, raw, col in _tokenize(text):
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", line=lineno, column=col, key=key)
        seen[key] = lineno
        if key in _SCALARS:
            name, typ = _SCALARS[key]
            values[name] = _convert(raw, typ, key, lineno)
        elif key in _MODEL_SCALARS:
            name, typ = _MODEL_SCALARS[key]
            model_vals[name] = (_convert(raw, typ, key, lineno), lineno)
        elif _AMP_RE.match(key):
            amps[int(_AMP_RE.match(key).group(1))] = (_convert(raw, float, key, lineno), lineno)
        elif _RATE_RE.match(key):
            which, idx, attr = _RATE_RE.match(key).groups()
            rates.setdefault((which, int(idx)), {})[attr] = (raw, lineno)
        else:
            raise ConfigError("unknown key", line=lineno, column=col, key=key)

    model = None
    if model_vals or amps or rates:
        model = _build_model(model_vals, amps, rates)
    values["model"] = model
    return _validated(RunConfig(**values), seen)


def _build_model(model_vals, amps, rates) -> ModelSpec:
    if "stages" not in model_vals:
        raise ConfigError("inline model needs model.stages", key="model.stages")
    M, line = model_vals.pop("stages")
    if M < 2:
        raise ConfigError("need at least two stages", line=line, key="model.stages")
    missing = [f"model.n{i}" for i in range(1, M + 1) if i not in amps]
    missing += [f"model.{w}{i}.kind" for w in "ap" for i in range(1, M) if (w, i) not in rates]
    if missing:
        raise ConfigError(f"inline model is missing {', '.join(missing)}", key=missing[0])
    for i, (_, ln) in amps.items():
        if not 1 <= i <= M:
            raise ConfigError(f"stage {i} out of range 1..{M}", line=ln, key=f"model.n{i}")
    for (w, i), attrs in rates.items():
        if not 1 <= i <= M - 1:
            ln = min(v[1] for v in attrs.values())
            raise ConfigError(f"stage {i} has no rates (valid 1..{M - 1})", line=ln, key=f"model.{w}{i}")

    def profile(w, i):
        attrs = dict(rates[(w, i)])
        prefix = f"model.{w}{i}"
        if "kind" not in attrs:
            ln = min(v[1] for v in attrs.values())
            raise ConfigError("profile kind not given", line=ln, key=f"{prefix}.kind")
        kind, ln = attrs.pop("kind")
        if kind not in RATE_KINDS:
            raise ConfigError(f"unknown profile kind {kind!r}", line=ln, key=f"{prefix}.kind")
        cls = RATE_KINDS[kind]
        types = {f.name: (tuple if f.name == "centers" else float) for f in dataclasses.fields(cls)}
        kw = {}
        for attr, (raw, aln) in attrs.items():
            if attr not in types:
                raise ConfigError(f"{kind} profile has no parameter {attr!r}", line=aln, key=f"{prefix}.{attr}")
            kw[attr] = _convert(raw, types[attr], f"{prefix}.{attr}", aln)
        try:
            return cls(**kw)
        except (TypeError, PresetError) as exc:
            raise ConfigError(f"bad {kind} profile: {exc}", line=ln, key=prefix) from None

    kw = {name: v for name, (v, _) in model_vals.items()}
    return ModelSpec(
        self_renewal=tuple(profile("a", i) for i in range(1, M)),
        proliferation=tuple(profile("p", i) for i in range(1, M)),
        initial_amplitudes=tuple(amps[i][0] for i in range(1, M + 1)),
        **kw,
    )


def _validated(cfg: RunConfig, lines: Dict[str, int]) -> RunConfig:
    def fail(key, msg):
        raise ConfigError(msg, line=lines.get(key), key=key)

    if cfg.preset is not None and cfg.model is not None:
        fail("preset", "give either a preset or an inline model, not both")
    if cfg.preset is None and cfg.model is None:
        raise ConfigError("no model: set 'preset' or an inline model.* block", key="preset")
    if cfg.preset is not None and cfg.preset not in PRESET_NAMES:
        fail("preset", f"unknown preset {cfg.preset!r}; choose from {', '.join(PRESET_NAMES)}")
    positive = {
        "solver.dt": cfg.dt,
        "solver.horizon": cfg.horizon,
        "grid": cfg.grid,
        "solver.record_every": cfg.record_every,
        "solver.series_every": cfg.series_every,
        "output.totals_every": cfg.totals_every,
        "output.heatmap_every": cfg.heatmap_every,
        "analysis.delta": cfg.delta,
        "analysis.prominence": cfg.prominence,
    }
    for key, v in positive.items():
        if not v > 0:
            fail(key, f"must be positive, got {v}")
    for key, v in {"analysis.theorem_window": cfg.theorem_window, "analysis.oscillation_window": cfg.oscillation_window}.items():
        if not 0 < v <= 1:
            fail(key, f"must be a fraction in (0, 1], got {v}")
    if cfg.grid_kind not in ("midpoint", "vertex"):
        fail("grid.kind", f"unknown grid kind {cfg.grid_kind!r}")
    try:
        cfg.solver_config()
    except ValueError as exc:
        key = "solver.integrator" if "integrator" in str(exc) else "solver.horizon"
        if "record_every" in str(exc):
            key = "solver.record_every"
        fail(key, str(exc))
    if cfg.model is not None:
        try:
            build_spec(cfg.model, cfg.make_grid(), strict=False)
        except (PresetError, ModelError) as exc:
            raise ConfigError(f"inline model rejected: {exc}", key="model") from None
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(c)) for c in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`; numbers are written losslessly."""
    lines = []
    for key, (name, _) in _SCALARS.items():
        v = getattr(cfg, name)
        if v is None:
            continue
        lines.append(f"{key} = {_fmt(v)}")
    if cfg.model is not None:
        spec = cfg.model
        lines.append(f"model.stages = {spec.num_stages}")
        for key, (name, _) in _MODEL_SCALARS.items():
            if name != "stages":
                lines.append(f"{key} = {_fmt(getattr(spec, name))}")
        for i, amp in enumerate(spec.initial_amplitudes, start=1):
            lines.append(f"model.n{i} = {_fmt(amp)}")
        for w, profiles in (("a", spec.self_renewal), ("p", spec.proliferation)):
            for i, prof in enumerate(profiles, start=1):
                lines.append(f"model.{w}{i}.kind = {prof.kind}")
                for f in dataclasses.fields(prof):
                    v = getattr(prof, f.name)
                    if v is not None:
                        lines.append(f"model.{w}{i}.{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"
