"""Product-space reformulation of m-set feasibility.

``C_1, ..., C_m`` in R^d become the diagonal ``A`` and the product
``B = C_1 x ... x C_m`` in R^(m d). When each ``C_i`` is a finite union,
``B`` is the finite union of all piece products.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import SelectionPolicy, StoppingConfig, StopReason, Trajectory, dr_run
from .sets import AffineSubspace, DimensionError, Piece, PieceProjection, as_point
from .unions import UnionSet, activity_band

LAZY_THRESHOLD = 256
TUPLE_CAP = 10_000


class LiftTooLargeError(ValueError):
    """The product has more piece tuples than the configured cap."""


@dataclass(frozen=True, eq=False)
class ProductPiece(Piece):
    """Cartesian product of pieces; projection acts blockwise."""

    components: tuple[Piece, ...]
    kind = "product"

    @property
    def convex(self) -> bool:
        return all(c.convex for c in self.components)

    @property
    def dim(self) -> int:
        return sum(c.dim for c in self.components)

    def _project(self, x):
        projs = [c.project(blk) for c, blk in zip(self.components, _split(x, self.components))]
        return _combine(projs)

    def to_dict(self):
        return {"type": self.kind, "components": [c.to_dict() for c in self.components]}


def _split(x: np.ndarray, components) -> list[np.ndarray]:
    cuts = np.cumsum([c.dim for c in components])[:-1]
    return np.split(x, cuts)


def _combine(projs: Sequence[PieceProjection]) -> PieceProjection:
    pts = tuple(np.concatenate(combo) for combo in itertools.product(*(p.nearest_points for p in projs)))
    dist = math.sqrt(sum(p.distance ** 2 for p in projs))
    return PieceProjection(pts, dist, any(p.multiplicity_flag for p in projs))


@dataclass(frozen=True, eq=False)
class ProductUnion:
    """Product of unions whose pieces are built only when a tuple is active.

    Piece ``j`` is the tuple ``np.unravel_index(j, shape)``, the same order
    as ``itertools.product`` over the component pieces.
    """

    component_sets: tuple[UnionSet, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(U) for U in self.component_sets)

    @property
    def dim(self) -> int:
        return sum(U.dim for U in self.component_sets)

    def __len__(self) -> int:
        return math.prod(self.shape)

    def piece(self, j: int) -> ProductPiece:
        idx = np.unravel_index(j, self.shape)
        return ProductPiece(tuple(U.pieces[k] for U, k in zip(self.component_sets, idx)))

    @property
    def convex_flags(self) -> tuple[bool, ...]:
        return tuple(self.piece(j).convex for j in range(len(self)))

    def piece_projection(self, j: int, x) -> PieceProjection:
        return self.piece(j).project(x)

    def piece_distance(self, j: int, x) -> float:
        return self.piece_projection(j, x).distance

    def candidates(self, x, tau_act: float | None = None):
        x = as_point(x)
        if x.size != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {x.size}")
        blocks = _split(x, self.component_sets)
        per = [[p.project(blk) for p in U.pieces] for U, blk in zip(self.component_sets, blocks)]
        mins = [min(pr.distance for pr in prs) for prs in per]
        dmin = math.sqrt(sum(m * m for m in mins))
        top = dmin + activity_band(dmin, tau_act)
        slack = top * top - dmin * dmin
        allowed = [[k for k, pr in enumerate(prs) if pr.distance ** 2 <= m * m + slack] for prs, m in zip(per, mins)]
        out = []
        for combo in itertools.product(*allowed):
            proj = _combine([per[c][k] for c, k in enumerate(combo)])
            if proj.distance <= top:
                out.append((int(np.ravel_multi_index(combo, self.shape)), proj))
        return out, dmin

    def distance(self, x) -> float:
        return self.candidates(x, 0.0)[1]


def diagonal(m: int, d: int) -> AffineSubspace:
    """``{(u, ..., u)}`` in R^(m d) with orthonormal spanning directions."""
    dirs = np.tile(np.eye(d), (1, m)) / math.sqrt(m)
    return AffineSubspace(np.zeros(m * d), dirs)


def lift(sets: Sequence[UnionSet], cap: int = TUPLE_CAP, lazy_threshold: int = LAZY_THRESHOLD):
    """Diagonal set and product set for the m-set problem."""
    sets = tuple(sets)
    if len(sets) < 2:
        raise ValueError("lifting needs at least two sets")
    dims = {U.dim for U in sets}
    if len(dims) != 1:
        raise DimensionError(f"component sets have mixed dimensions {sorted(dims)}")
    d = dims.pop()
    lazy = ProductUnion(sets)
    n = len(lazy)
    if n > cap:
        raise LiftTooLargeError(f"{n} piece tuples exceed the cap of {cap}")
    A_diag = UnionSet.of(diagonal(len(sets), d))
    if n > lazy_threshold:
        return A_diag, lazy
    return A_diag, UnionSet(tuple(lazy.piece(j) for j in range(n)))


@dataclass(frozen=True, eq=False)
class LiftedProblem:
    component_sets: tuple[UnionSet, ...]
    A_diag: UnionSet
    B_prod: UnionSet | ProductUnion

    @classmethod
    def from_sets(cls, sets: Sequence[UnionSet], cap: int = TUPLE_CAP) -> "LiftedProblem":
        A, B = lift(sets, cap)
        return cls(tuple(sets), A, B)

    @property
    def m(self) -> int:
        return len(self.component_sets)

    @property
    def base_dimension(self) -> int:
        return self.component_sets[0].dim

    @property
    def lifted_dimension(self) -> int:
        return self.m * self.base_dimension

    def replicate(self, u) -> np.ndarray:
        return np.tile(as_point(u, self.base_dimension), self.m)


@dataclass(frozen=True, eq=False)
class LiftResult:
    trajectory: Trajectory
    candidate: np.ndarray
    residuals: list[float]
    feasible_point: np.ndarray | None


def solve_lifted(problem: LiftedProblem, x0, config: StoppingConfig | None = None,
                 policy: SelectionPolicy | None = None) -> LiftResult:
    """Run DR in the product space; read off the diagonal shadow's common block.

    ``x0`` may be a base point (replicated) or a lifted point.
    """
    x0 = as_point(x0)
    if x0.size == problem.base_dimension:
        x0 = problem.replicate(x0)
    traj = dr_run(problem.A_diag, problem.B_prod, x0, config, policy)
    shadow = problem.A_diag.pieces[0].project(traj.x_next[-1]).point
    u = shadow[: problem.base_dimension].copy()
    residuals = [U.distance(u) for U in problem.component_sets]
    feasible = u if traj.stop_reason is StopReason.CONVERGED else None
    return LiftResult(traj, u, residuals, feasible)
