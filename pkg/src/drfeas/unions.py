"""Finite unions of pieces, active index pairs and separation gaps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .sets import DimensionError, Piece, PieceProjection, as_point, check_same_dim

REL_BAND = 1e-9


def activity_band(dmin: float, tau_act: float | None) -> float:
    """Tolerance band for argmin membership: ``1e-9 (1 + dmin)`` by default."""
    return REL_BAND * (1.0 + dmin) if tau_act is None else float(tau_act)


@dataclass(frozen=True, eq=False)
class UnionSet:
    """An ordered, nonempty union of pieces sharing one ambient dimension."""

    pieces: tuple[Piece, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("a union needs at least one piece")
        check_same_dim(pieces)
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def of(cls, *pieces: Piece) -> "UnionSet":
        return cls(tuple(pieces))

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    @property
    def convex_flags(self) -> tuple[bool, ...]:
        return tuple(p.convex for p in self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def piece_projection(self, i: int, x) -> PieceProjection:
        return self.pieces[i].project(x)

    def piece_distance(self, i: int, x) -> float:
        return self.pieces[i].project(x).distance

    def candidates(self, x, tau_act: float | None = None) -> tuple[list[tuple[int, PieceProjection]], float]:
        """Pieces attaining the union distance within the activity band."""
        x = as_point(x)
        if x.size != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {x.size}")
        projs = [p.project(x) for p in self.pieces]
        dmin = min(pr.distance for pr in projs)
        band = activity_band(dmin, tau_act)
        return [(i, pr) for i, pr in enumerate(projs) if pr.distance <= dmin + band], dmin

    def distance(self, x) -> float:
        return self.candidates(x, 0.0)[1]


def project_union(U: UnionSet, x, tau_act: float | None = None) -> tuple[list[tuple[int, np.ndarray]], float]:
    """Nearest ``(piece index, point)`` pairs and the exact union distance."""
    cands, dmin = U.candidates(x, tau_act)
    return [(i, p) for i, pr in cands for p in pr.nearest_points], dmin


@dataclass(frozen=True)
class Branch:
    """One way to realize a DR (or MAP) step: pieces ``(i, j)``, shadow and reflected shadow."""

    i: int
    j: int
    a: np.ndarray
    b: np.ndarray
    dist_a: float
    dist_b: float

    @property
    def pair(self) -> tuple[int, int]:
        return (self.i, self.j)


def _check_dims(A, B, x) -> np.ndarray:
    if A.dim != B.dim:
        raise DimensionError(f"sets live in dimensions {A.dim} and {B.dim}")
    return as_point(x, A.dim)


def dr_branches(A, B, x, tau_act: float | None = None) -> list[Branch]:
    """Every active branch at ``x``: ``a`` in P_{A_i}(x), ``b`` in P_{B_j}(2a - x)."""
    x = _check_dims(A, B, x)
    out = []
    a_cands, _ = A.candidates(x, tau_act)
    for i, pa in a_cands:
        for a in pa.nearest_points:
            y = 2.0 * a - x
            b_cands, _ = B.candidates(y, tau_act)
            for j, pb in b_cands:
                for b in pb.nearest_points:
                    out.append(Branch(i, j, a, b, pa.distance, pb.distance))
    return out


def map_branches(A, B, x, tau_act: float | None = None) -> list[Branch]:
    """Alternating-projection branches: ``a`` in P_{A_i}(x), ``b`` in P_{B_j}(a)."""
    x = _check_dims(A, B, x)
    out = []
    a_cands, _ = A.candidates(x, tau_act)
    for i, pa in a_cands:
        for a in pa.nearest_points:
            b_cands, _ = B.candidates(a, tau_act)
            for j, pb in b_cands:
                for b in pb.nearest_points:
                    out.append(Branch(i, j, a, b, pa.distance, pb.distance))
    return out


@dataclass(frozen=True)
class ActivePairSet:
    """The set K(x) of active index pairs."""

    pairs: frozenset[tuple[int, int]]

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    def __le__(self, other: "ActivePairSet") -> bool:
        return self.pairs <= other.pairs

    def issubset(self, other: "ActivePairSet") -> bool:
        return self.pairs <= other.pairs

    @property
    def first_indices(self) -> frozenset[int]:
        """I(x): the A-pieces taking part in some active pair."""
        return frozenset(i for i, _ in self.pairs)


def active_pairs(A, B, x, tau_act: float | None = None) -> ActivePairSet:
    """K(x); set-valued reflections contribute the union over their candidates."""
    return ActivePairSet(frozenset(br.pair for br in dr_branches(A, B, x, tau_act)))


@dataclass(frozen=True)
class SeparationGaps:
    delta1: float
    delta2: float

    @property
    def radius(self) -> float:
        """``min(delta1, delta2) / 2`` (``inf`` when both index sets are empty)."""
        return 0.5 * min(self.delta1, self.delta2)


def separation_gaps(A, B, x_star, tau_act: float | None = None) -> SeparationGaps:
    """Distance gaps separating inactive pieces from the active ones at ``x_star``.

    ``delta1`` is taken over A-pieces outside I(x*), ``delta2`` over pairs
    ``(i, j)`` outside K(x*) with ``i`` in I(x*). An empty minimum is ``inf``.
    """
    x = _check_dims(A, B, x_star)
    K = active_pairs(A, B, x, tau_act)
    active_i = K.first_indices
    dA = A.distance(x)
    delta1 = min((A.piece_distance(i, x) - dA for i in range(len(A)) if i not in active_i), default=math.inf)
    delta2 = math.inf
    for i in sorted(active_i):
        for a in A.piece_projection(i, x).nearest_points:
            y = 2.0 * a - x
            dB = B.distance(y)
            for j in range(len(B)):
                if (i, j) not in K:
                    delta2 = min(delta2, B.piece_distance(j, y) - dB)
    return SeparationGaps(delta1, delta2)

