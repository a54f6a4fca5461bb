"""Scenario files: JSON schema, validation and the built-in corpus."""

from __future__ import annotations

import json
import math
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import sets as S
from .engine import SelectionPolicy, StoppingConfig
from .unions import UnionSet


class ScenarioError(ValueError):
    """Base class for scenario parse failures."""


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line, self.column = line, column


class ScenarioValidationError(ScenarioError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Vec = list[float]


class _PieceSpec(_Model):
    @model_validator(mode="after")
    def _buildable(self):
        self.build()
        return self

    def build(self):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# piece specs


class SingletonSpec(_PieceSpec):
    type: Literal["singleton"]
    point: Vec

    def build(self):
        return S.Singleton(np.array(self.point))


class SegmentSpec(_PieceSpec):
    type: Literal["segment"]
    start: Vec
    end: Vec

    def build(self):
        return S.Segment(np.array(self.start), np.array(self.end))


class LineSpec(_PieceSpec):
    """Line through two distinct points."""

    type: Literal["line"]
    through: tuple[Vec, Vec]

    def build(self):
        return S.line_through(*self.through)


class AffineSpec(_PieceSpec):
    type: Literal["affine"]
    point: Vec
    directions: list[Vec]

    def build(self):
        return S.AffineSubspace(np.array(self.point), np.array(self.directions))


class HalfspaceSpec(_PieceSpec):
    """``{y : normal . y <= offset}``; the normal need not be unit length."""

    type: Literal["halfspace"]
    normal: Vec
    offset: float

    def build(self):
        n = np.array(self.normal)
        s = np.linalg.norm(n)
        if s == 0.0:
            raise S.InvalidPieceError("halfspace normal must be nonzero")
        return S.Halfspace(n / s, self.offset / s)


class BallSpec(_PieceSpec):
    type: Literal["ball"]
    center: Vec
    radius: float

    def build(self):
        return S.Ball(np.array(self.center), self.radius)


class SphereSpec(_PieceSpec):
    type: Literal["sphere"]
    center: Vec
    radius: float

    def build(self):
        return S.Sphere(np.array(self.center), self.radius)


class BoxSpec(_PieceSpec):
    type: Literal["box"]
    lower: Vec
    upper: Vec

    def build(self):
        return S.Box(np.array(self.lower), np.array(self.upper))


class FixedShapeSpec(_PieceSpec):
    type: Literal["solid-cylinder", "cylinder-mantle", "base-circle"]

    def build(self):
        return {"solid-cylinder": S.SolidCylinder, "cylinder-mantle": S.CylinderMantle,
                "base-circle": S.BaseCircle}[self.type]()


class SpiralBranchSpec(_PieceSpec):
    type: Literal["spiral-branch"]
    sign: Literal[1, -1]
    t_max: float = 40.0

    def build(self):
        return S.SpiralBranch(self.sign, self.t_max)


PieceSpec = Annotated[
    Union[SingletonSpec, SegmentSpec, LineSpec, AffineSpec, HalfspaceSpec, BallSpec, SphereSpec, BoxSpec,
          FixedShapeSpec, SpiralBranchSpec],
    Field(discriminator="type"),
]


def build_union(specs) -> UnionSet:
    return UnionSet(tuple(s.build() for s in specs))


# ---------------------------------------------------------------------------
# run configuration


class UniformBallStart(_Model):
    center: Vec
    radius: float = Field(gt=0)
    seed: int = 0

    def draw(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        c = np.array(self.center)
        while True:
            u = rng.uniform(-1.0, 1.0, c.size)
            if u @ u <= 1.0:
                return c + self.radius * u


class GeneratedStart(_Model):
    uniform_ball: UniformBallStart


class PolicySpec(_Model):
    kind: Literal["lowest-index", "nearest-then-lowest-index", "seeded-random"] = "lowest-index"
    seed: int | None = None

    @model_validator(mode="after")
    def _seeded(self):
        if self.kind == "seeded-random" and self.seed is None:
            raise ValueError("seeded-random policy needs a seed")
        return self

    def build(self) -> SelectionPolicy:
        return SelectionPolicy(self.kind, self.seed)


class StoppingSpec(_Model):
    max_iter: int = Field(100_000, ge=1)
    tol_step: float = Field(1e-12, gt=0)
    confirm_window: int = Field(10, ge=1)
    cycle_max_period: int = Field(64, ge=2)
    cycle_tol: float = Field(1e-10, gt=0)
    cycle_periods: int = Field(4, ge=2)
    tail_fraction: float = Field(0.25, gt=0, le=1)
    vanish_ratio: float = Field(0.1, gt=0, lt=1)
    tau_act: float | None = Field(None, ge=0)

    def build(self) -> StoppingConfig:
        return StoppingConfig(**self.model_dump())


class SpiralSpec(_Model):
    t1: float = Field(1.0, ge=0.5)
    steps: int = Field(1000, ge=1)
    stop_t: float | None = None


class AnalysisParams(_Model):
    point: Vec | None = None
    eps_hi: float = Field(2.0, gt=0)
    samples: int = Field(2000, ge=1)
    bisection_steps: int = Field(30, ge=1)
    seed: int = 0
    t_grid: list[float] = Field(default_factory=lambda: [0.5 * k for k in range(1, 25)])
    angle_bins: int = Field(360, ge=8)


Method = Literal["dr", "map", "spiral-dr", "spiral-map-inner", "spiral-map-outer"]
Analysis = Literal["classify", "radius", "accumulation", "verify-spiral"]
SPIRAL_METHODS = ("spiral-dr", "spiral-map-inner", "spiral-map-outer")


class Scenario(_Model):
    name: str
    dimension: int = Field(ge=1)
    set_A: list[PieceSpec] | None = Field(None, min_length=1)
    set_B: list[PieceSpec] | None = Field(None, min_length=1)
    lift: list[list[PieceSpec]] | None = Field(None, min_length=2)
    start: Vec | GeneratedStart | None = None
    method: Method = "dr"
    spiral: SpiralSpec = SpiralSpec()
    policy: PolicySpec = PolicySpec()
    stopping: StoppingSpec = StoppingSpec()
    analysis: list[Analysis] = []
    analysis_params: AnalysisParams = AnalysisParams()

    @model_validator(mode="after")
    def _consistent(self):
        spiral = self.method in SPIRAL_METHODS
        if spiral:
            if self.dimension != 3:
                raise ValueError("spiral methods live in dimension 3")
            return self
        if self.lift is not None:
            if self.set_A is not None or self.set_B is not None:
                raise ValueError("give either lift or set_A/set_B, not both")
            if self.method != "dr":
                raise ValueError("lifted problems run with method 'dr'")
            groups = self.lift
        else:
            if self.set_A is None or self.set_B is None:
                raise ValueError("set_A and set_B are required unless lift is given")
            groups = [self.set_A, self.set_B]
        for g in groups:
            for p in g:
                if p.build().dim != self.dimension:
                    raise ValueError(f"piece {p.type!r} has dimension {p.build().dim}, expected {self.dimension}")
        if self.start is None:
            raise ValueError("start is required for dr and map runs")
        if isinstance(self.start, list) and len(self.start) != self.dimension:
            raise ValueError(f"start has {len(self.start)} coordinates, expected {self.dimension}")
        if isinstance(self.start, GeneratedStart) and len(self.start.uniform_ball.center) != self.dimension:
            raise ValueError("uniform_ball center has the wrong dimension")
        return self

    @property
    def A(self) -> UnionSet:
        return build_union(self.set_A)

    @property
    def B(self) -> UnionSet:
        return build_union(self.set_B)

    def lift_sets(self) -> list[UnionSet]:
        return [build_union(g) for g in self.lift]

    def start_point(self) -> np.ndarray:
        if isinstance(self.start, GeneratedStart):
            return self.start.uniform_ball.draw()
        return np.array(self.start, dtype=float)


def _path(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _error(exc: ValidationError) -> ScenarioValidationError:
    err = exc.errors()[0]
    return ScenarioValidationError(_path(err["loc"]), err["msg"])


def validate_scenario(data) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise _error(exc) from None
    except (S.InvalidPieceError, S.DimensionError) as exc:
        raise ScenarioValidationError("<root>", str(exc)) from None


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a JSON scenario; nothing partial is returned."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return validate_scenario(data)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(sc.model_dump(mode="json"), indent=2)


# ---------------------------------------------------------------------------
# built-in corpus


def _x_axis():
    return {"type": "line", "through": [[0.0, 0.0], [1.0, 0.0]]}


def _singles(*pts):
    return [{"type": "singleton", "point": list(map(float, p))} for p in pts]


def _discrete_cycle(eta: float = 1.0):
    return {
        "name": "discrete-cycle", "dimension": 2,
        "set_A": [_x_axis()],
        "set_B": _singles((0, 0), (7 + eta, eta), (7, -eta)),
        "start": [7.0, eta],
        "stopping": {"max_iter": 100},
        "analysis": ["classify"],
    }


def _axes_line(x_star: float = 1.0, y_star: float = 2.0, seed: int = 0):
    return {
        "name": "axes-line", "dimension": 2,
        "set_A": [_x_axis(), {"type": "line", "through": [[0.0, 0.0], [0.0, 1.0]]}],
        "set_B": [{"type": "line", "through": [[x_star, 0.0], [0.0, y_star]]}],
        "start": {"uniform_ball": {"center": [x_star, 0.0], "radius": 0.49, "seed": seed}},
        "stopping": {"max_iter": 10_000},
        "analysis": ["classify", "radius"],
        "analysis_params": {"point": [x_star, 0.0], "eps_hi": 2.0 * max(x_star, y_star)},
    }


def _weak_fixed(start: float = -0.25):
    return {
        "name": "weak-fixed", "dimension": 1,
        "set_A": _singles((-1,), (1,)),
        "set_B": _singles((-2,), (1,)),
        "start": [start],
        "stopping": {"max_iter": 100},
        "analysis": ["classify"],
        "analysis_params": {"point": [0.0]},
    }


def _two_circles(gap: float = 2.0):
    return {
        "name": "two-circles", "dimension": 2,
        "set_A": [{"type": "sphere", "center": [-gap, 0.0], "radius": gap - 1.0},
                  {"type": "sphere", "center": [gap, 0.0], "radius": gap - 1.0}],
        "set_B": [{"type": "sphere", "center": [0.0, 0.0], "radius": 1.0}],
        "start": [0.0, 0.0],
        "stopping": {"max_iter": 100},
        "analysis": ["classify", "radius"],
        "analysis_params": {"point": [0.0, 0.0], "eps_hi": 1.0},
    }


def _convex_lines(seed: int = 0):
    return {
        "name": "convex-lines", "dimension": 2,
        "set_A": [{"type": "line", "through": [[0.0, 1.0], [1.0, 2.0]]}],
        "set_B": [{"type": "line", "through": [[0.0, 3.0], [1.0, 1.0]]}],
        "start": {"uniform_ball": {"center": [0.0, 0.0], "radius": 10.0, "seed": seed}},
        "analysis": ["classify"],
    }


def _spiral(t1: float = 1.0, steps: int = 10_000, stop_t: float | None = None):
    return {
        "name": "spiral", "dimension": 3, "method": "spiral-dr",
        "spiral": {"t1": t1, "steps": steps, "stop_t": stop_t},
        "analysis": ["accumulation"],
    }


def _spiral_map(variant: str):
    def make(t1: float = 1.0, steps: int = 10_000, stop_t: float | None = None):
        d = _spiral(t1, steps, stop_t)
        d.update(name=f"spiral-map-{variant}", method=f"spiral-map-{variant}")
        return d
    return make


def _halfplanes_lift(seed: int = 0):
    r2 = math.sqrt(2.0)
    return {
        "name": "halfplanes-lift", "dimension": 2,
        "lift": [[{"type": "halfspace", "normal": [-1.0, 0.0], "offset": 1.0}],
                 [{"type": "halfspace", "normal": [0.0, -1.0], "offset": 1.0}],
                 [{"type": "halfspace", "normal": [1.0 / r2, 1.0 / r2], "offset": r2}]],
        "start": {"uniform_ball": {"center": [0.0, 0.0], "radius": 10.0, "seed": seed}},
    }


BUILTINS = {
    "discrete-cycle": _discrete_cycle,
    "axes-line": _axes_line,
    "weak-fixed": _weak_fixed,
    "two-circles": _two_circles,
    "convex-lines": _convex_lines,
    "spiral": _spiral,
    "spiral-map-outer": _spiral_map("outer"),
    "spiral-map-inner": _spiral_map("inner"),
    "halfplanes-lift": _halfplanes_lift,
}


def builtin_scenario(name: str, **params) -> Scenario:
    """A named scenario from the corpus with keyword parameter overrides."""
    if name not in BUILTINS:
        raise ScenarioValidationError("name", f"unknown built-in {name!r}; choose from {sorted(BUILTINS)}")
    try:
        data = BUILTINS[name](**params)
    except TypeError as exc:
        raise ScenarioValidationError("params", str(exc)) from None
    return validate_scenario(data)
