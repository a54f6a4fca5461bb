"""Geometric primitives with exact nearest-point maps.

Every primitive is an immutable value exposing ``project(x)``, which returns
the full set of nearest points (or a canonical representative when that set
is a continuum), together with the distance. Convex primitives always have a
single nearest point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Sequence

import numpy as np

MEMBERSHIP_TOL = 1e-10
ORTHO_TOL = 1e-12

# cylinder/spiral geometry is fixed to R^3
SPIRAL_DIM = 3


class DimensionError(ValueError):
    """Point and piece live in different ambient dimensions."""


class InvalidPieceError(ValueError):
    """Piece parameters violate the primitive's invariants."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Return a fresh float64 copy of ``x`` after validating it."""
    p = np.array(x, dtype=float).reshape(-1)
    if p.size == 0:
        raise DimensionError("a point needs at least one coordinate")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point has non-finite coordinates: {p}")
    if dim is not None and p.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.size}")
    return p


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidPieceError("piece parameters must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PieceProjection:
    """Nearest points of a piece to a query point."""

    nearest_points: tuple[np.ndarray, ...]
    distance: float
    multiplicity_flag: bool = False

    @property
    def point(self) -> np.ndarray:
        """The canonical (first) nearest point."""
        return self.nearest_points[0]


def _single(p: np.ndarray, x: np.ndarray) -> PieceProjection:
    p.setflags(write=False)
    return PieceProjection((p,), float(np.linalg.norm(x - p)))


class Piece:
    """Base class of all primitives."""

    convex: ClassVar[bool] = True
    kind: ClassVar[str] = "piece"
    dim: int

    def project(self, x) -> PieceProjection:
        return self._project(as_point(x, self.dim))

    def _project(self, x: np.ndarray) -> PieceProjection:
        raise NotImplementedError

    def distance(self, x) -> float:
        return self.project(x).distance

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.distance(x) <= tol

    def to_dict(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# convex primitives


@dataclass(frozen=True, eq=False)
class Singleton(Piece):
    point: np.ndarray
    kind: ClassVar[str] = "singleton"

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(as_point(self.point)))

    @property
    def dim(self) -> int:
        return self.point.size

    def _project(self, x):
        return _single(self.point.copy(), x)

    def to_dict(self):
        return {"type": self.kind, "point": self.point.tolist()}


@dataclass(frozen=True, eq=False)
class Segment(Piece):
    start: np.ndarray
    end: np.ndarray
    kind: ClassVar[str] = "segment"

    def __post_init__(self):
        p, q = as_point(self.start), as_point(self.end)
        if p.size != q.size:
            raise InvalidPieceError("segment endpoints differ in dimension")
        object.__setattr__(self, "start", _frozen(p))
        object.__setattr__(self, "end", _frozen(q))

    @property
    def dim(self) -> int:
        return self.start.size

    def _project(self, x):
        u = self.end - self.start
        uu = float(u @ u)
        s = 0.0 if uu == 0.0 else min(1.0, max(0.0, float((x - self.start) @ u) / uu))
        return _single(self.start + s * u, x)

    def to_dict(self):
        return {"type": self.kind, "start": self.start.tolist(), "end": self.end.tolist()}


@dataclass(frozen=True, eq=False)
class AffineSubspace(Piece):
    """``point + span(directions)``; rows of ``directions`` are orthonormal."""

    point: np.ndarray
    directions: np.ndarray
    kind: ClassVar[str] = "affine"

    def __post_init__(self):
        p = as_point(self.point)
        D = np.array(self.directions, dtype=float).reshape(-1, p.size)
        gram = D @ D.T
        if D.shape[0] > p.size or np.max(np.abs(gram - np.eye(D.shape[0])), initial=0.0) > ORTHO_TOL:
            raise InvalidPieceError("affine directions must be orthonormal")
        object.__setattr__(self, "point", _frozen(p))
        object.__setattr__(self, "directions", _frozen(D))

    @property
    def dim(self) -> int:
        return self.point.size

    def _project(self, x):
        D = self.directions
        return _single(self.point + D.T @ (D @ (x - self.point)), x)

    def to_dict(self):
        return {"type": self.kind, "point": self.point.tolist(), "directions": self.directions.tolist()}


def line_through(p, q) -> AffineSubspace:
    """Line through two distinct points, as an :class:`AffineSubspace`."""
    p, q = as_point(p), as_point(q)
    u = q - p
    n = np.linalg.norm(u)
    if n == 0.0:
        raise InvalidPieceError("line needs two distinct points")
    return AffineSubspace(p, (u / n)[None, :])


@dataclass(frozen=True, eq=False)
class Halfspace(Piece):
    """``{y : normal . y <= offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float
    kind: ClassVar[str] = "halfspace"

    def __post_init__(self):
        n = as_point(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > ORTHO_TOL:
            raise InvalidPieceError("halfspace normal must have unit norm")
        object.__setattr__(self, "normal", _frozen(n))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.normal.size

    def _project(self, x):
        excess = float(self.normal @ x) - self.offset
        if excess <= 0.0:
            return _single(x.copy(), x)
        return _single(x - excess * self.normal, x)

    def to_dict(self):
        return {"type": self.kind, "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Ball(Piece):
    center: np.ndarray
    radius: float
    kind: ClassVar[str] = "ball"

    def __post_init__(self):
        if not (self.radius >= 0.0 and math.isfinite(self.radius)):
            raise InvalidPieceError("ball radius must be finite and >= 0")
        object.__setattr__(self, "center", _frozen(as_point(self.center)))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def _project(self, x):
        v = x - self.center
        r = np.linalg.norm(v)
        if r <= self.radius:
            return _single(x.copy(), x)
        return _single(self.center + (self.radius / r) * v, x)

    def to_dict(self):
        return {"type": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(Piece):
    lower: np.ndarray
    upper: np.ndarray
    kind: ClassVar[str] = "box"

    def __post_init__(self):
        lo, hi = as_point(self.lower), as_point(self.upper)
        if lo.size != hi.size or np.any(lo > hi):
            raise InvalidPieceError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self) -> int:
        return self.lower.size

    def _project(self, x):
        return _single(np.clip(x, self.lower, self.upper), x)

    def to_dict(self):
        return {"type": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class SolidCylinder(Piece):
    """Convex hull of the cylinder mantle: unit disk times ``[0, 1]`` in R^3."""

    kind: ClassVar[str] = "solid-cylinder"
    dim: ClassVar[int] = SPIRAL_DIM

    def _project(self, x):
        r = math.hypot(x[0], x[1])
        scale = 1.0 if r <= 1.0 else 1.0 / r
        return _single(np.array([x[0] * scale, x[1] * scale, min(1.0, max(0.0, x[2]))]), x)

    def to_dict(self):
        return {"type": self.kind}


# ---------------------------------------------------------------------------
# nonconvex primitives


@dataclass(frozen=True, eq=False)
class Sphere(Piece):
    """Sphere of positive radius (a circle in the plane).

    At the center every sphere point is nearest; the point in direction
    ``(1, 0, ...)`` is returned and ``multiplicity_flag`` is set.
    """

    center: np.ndarray
    radius: float
    convex: ClassVar[bool] = False
    kind: ClassVar[str] = "sphere"

    def __post_init__(self):
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise InvalidPieceError("sphere radius must be finite and > 0")
        object.__setattr__(self, "center", _frozen(as_point(self.center)))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def _project(self, x):
        v = x - self.center
        r = float(np.linalg.norm(v))
        if r == 0.0:
            p = self.center.copy()
            p[0] += self.radius
            p.setflags(write=False)
            return PieceProjection((p,), self.radius, True)
        return _single(self.center + (self.radius / r) * v, x)

    def sample(self, n: int) -> np.ndarray:
        """``n`` equally spaced points on the circle (planar spheres only)."""
        if self.dim != 2:
            raise TypeError("sampling is only defined for circles in R^2")
        th = 2.0 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.column_stack([np.cos(th), np.sin(th)])

    def angles(self, pts: np.ndarray) -> np.ndarray:
        d = np.asarray(pts) - self.center
        return np.arctan2(d[:, 1], d[:, 0])

    def to_dict(self):
        return {"type": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class CylinderMantle(Piece):
    """``{(cos a, sin a, h) : h in [0, 1]}`` in R^3."""

    convex: ClassVar[bool] = False
    kind: ClassVar[str] = "cylinder-mantle"
    dim: ClassVar[int] = SPIRAL_DIM

    def _project(self, x):
        r = math.hypot(x[0], x[1])
        h = min(1.0, max(0.0, x[2]))
        if r == 0.0:
            p = np.array([1.0, 0.0, h])
            p.setflags(write=False)
            return PieceProjection((p,), float(np.linalg.norm(x - p)), True)
        return _single(np.array([x[0] / r, x[1] / r, h]), x)

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True, eq=False)
class BaseCircle(Piece):
    """The unit circle at height zero in R^3."""

    convex: ClassVar[bool] = False
    kind: ClassVar[str] = "base-circle"
    dim: ClassVar[int] = SPIRAL_DIM

    def _project(self, x):
        r = math.hypot(x[0], x[1])
        if r == 0.0:
            p = np.array([1.0, 0.0, 0.0])
            p.setflags(write=False)
            return PieceProjection((p,), float(np.linalg.norm(x - p)), True)
        return _single(np.array([x[0] / r, x[1] / r, 0.0]), x)

    def sample(self, n: int) -> np.ndarray:
        th = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(th), np.sin(th), np.zeros(n)])

    def angles(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts)
        return np.arctan2(pts[:, 1], pts[:, 0])

    def to_dict(self):
        return {"type": self.kind}


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Minimize a unimodal ``f`` on ``[lo, hi]`` by golden-section search."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def spiral_curve(sign: int, s):
    """Points ``((1 + sign e^-s) cos s, (1 + sign e^-s) sin s, e^(-s/2))``."""
    s = np.asarray(s, dtype=float)
    rho = 1.0 + sign * np.exp(-s)
    return np.stack([rho * np.cos(s), rho * np.sin(s), np.exp(-0.5 * s)], axis=-1)


def _curve_jets(sign: int, s: float):
    e = math.exp(-s)
    c, sn = math.cos(s), math.sin(s)
    rho, drho, ddrho = 1.0 + sign * e, -sign * e, sign * e
    h = math.exp(-0.5 * s)
    b = np.array([rho * c, rho * sn, h])
    db = np.array([drho * c - rho * sn, drho * sn + rho * c, -0.5 * h])
    ddb = np.array([ddrho * c - 2.0 * drho * sn - rho * c, ddrho * sn + 2.0 * drho * c - rho * sn, 0.25 * h])
    return b, db, ddb


@dataclass(frozen=True, eq=False)
class SpiralBranch(Piece):
    """One logarithmic spiral branch, truncated at ``t_max``, closed up with F.

    Projection is global: a grid scan of the parameter with spacing
    ``grid_step``, golden-section refinement of the best local minima and a
    guarded Newton polish on the stationarity condition. The base circle F is
    always a candidate as well.
    """

    sign: int
    t_max: float = 40.0
    grid_step: float = 0.05
    convex: ClassVar[bool] = False
    kind: ClassVar[str] = "spiral-branch"
    dim: ClassVar[int] = SPIRAL_DIM
    n_refine: ClassVar[int] = 4

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise InvalidPieceError("spiral sign must be +1 or -1")
        if not (self.t_max > 0.0 and self.grid_step > 0.0):
            raise InvalidPieceError("spiral t_max and grid_step must be positive")

    def point(self, s: float) -> np.ndarray:
        return spiral_curve(self.sign, s)

    def nearest_parameter(self, x) -> tuple[float, float]:
        """Best branch parameter and its distance, ignoring F."""
        x = as_point(x, SPIRAL_DIM)
        n = int(math.ceil(self.t_max / self.grid_step))
        grid = np.linspace(0.0, self.t_max, n + 1)
        d2 = np.sum((spiral_curve(self.sign, grid) - x) ** 2, axis=1)
        padded = np.concatenate([[np.inf], d2, [np.inf]])
        local = np.flatnonzero((d2 <= padded[:-2]) & (d2 <= padded[2:]))
        local = local[np.argsort(d2[local])][: self.n_refine]

        def f(s):
            b = spiral_curve(self.sign, s)
            return float(np.sum((b - x) ** 2))

        best_s, best_d2 = 0.0, math.inf
        for k in local:
            lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n)]
            s = self._polish(x, golden_section(f, lo, hi), lo, hi)
            for cand in (s, lo, hi):
                v = f(cand)
                if v < best_d2:
                    best_s, best_d2 = cand, v
        return best_s, math.sqrt(best_d2)

    def _polish(self, x, s, lo, hi):
        for _ in range(8):
            b, db, ddb = _curve_jets(self.sign, s)
            r = x - b
            g = -float(r @ db)
            gp = float(db @ db) - float(r @ ddb)
            if gp <= 0.0:
                break
            s_new = s - g / gp
            if not lo <= s_new <= hi:
                break
            if abs(s_new - s) <= 1e-16 * max(1.0, abs(s)):
                s = s_new
                break
            s = s_new
        return s

    def _project(self, x):
        s, d_branch = self.nearest_parameter(x)
        f_proj = BaseCircle()._project(x)
        cands = [(d_branch, self.point(s)), (f_proj.distance, f_proj.point)]
        cands.sort(key=lambda c: c[0])
        dmin = cands[0][0]
        pts = [cands[0][1]]
        flag = f_proj.multiplicity_flag and cands[0][1] is f_proj.point
        if cands[1][0] - dmin <= 1e-12 and np.linalg.norm(cands[1][1] - pts[0]) > 1e-9:
            pts.append(cands[1][1])
            flag = True
        for p in pts:
            p.setflags(write=False)
        return PieceProjection(tuple(pts), float(dmin), flag)

    def to_dict(self):
        return {"type": self.kind, "sign": "+" if self.sign > 0 else "-", "t_max": self.t_max}


CONVEX_KINDS = (Singleton, Segment, AffineSubspace, Halfspace, Ball, Box, SolidCylinder)
NONCONVEX_KINDS = (Sphere, CylinderMantle, BaseCircle, SpiralBranch)


def project_piece(piece: Piece, x) -> PieceProjection:
    """Exact nearest points of ``piece`` to ``x``."""
    return piece.project(x)


def reflect_piece(piece: Piece, x) -> list[np.ndarray]:
    """All reflections ``2p - x`` over the nearest points ``p``."""
    x = as_point(x, piece.dim)
    return [2.0 * p - x for p in piece.project(x).nearest_points]


def dist_piece(piece: Piece, x) -> float:
    return piece.project(x).distance


def piece_from_dict(d: dict) -> Piece:
    """Inverse of ``Piece.to_dict``."""
    d = dict(d)
    kind = d.pop("type")
    table = {cls.kind: cls for cls in CONVEX_KINDS + NONCONVEX_KINDS}
    if kind not in table:
        raise InvalidPieceError(f"unknown piece type {kind!r}")
    if kind == "spiral-branch":
        d["sign"] = {"+": 1, "-": -1}.get(d["sign"], d["sign"])
    return table[kind](**d)


def check_same_dim(pieces: Sequence[Piece]) -> int:
    dims = {p.dim for p in pieces}
    if len(dims) != 1:
        raise DimensionError(f"pieces have mixed dimensions {sorted(dims)}")
    return dims.pop()
