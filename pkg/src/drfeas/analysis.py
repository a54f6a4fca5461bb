"""Fixed-point classification, radius of attraction and accumulation sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .sets import as_point
from .unions import UnionSet, active_pairs, dr_branches, separation_gaps

FIX_TOL = 1e-10


class FixStatus(str, Enum):
    NOT_FIXED = "not-fixed"
    FIXED = "fixed"
    STRONG_FIXED = "strong-fixed"


class NotStrongFixedError(ValueError):
    """A certificate was requested at a point that is not a strong fixed point."""


@dataclass(frozen=True)
class FixClassification:
    status: FixStatus
    image: np.ndarray
    witness_pairs: list[tuple[np.ndarray, np.ndarray]]
    index_pairs: list[tuple[int, int]]

    @property
    def is_fixed(self) -> bool:
        return self.status is not FixStatus.NOT_FIXED

    def distinct_shadows(self, tol: float = FIX_TOL) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for a, _ in self.witness_pairs:
            if all(np.linalg.norm(a - s) > tol for s in out):
                out.append(a)
        return out

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "image": self.image.tolist(),
            "witness_pairs": [[a.tolist(), b.tolist()] for a, b in self.witness_pairs],
            "index_pairs": [list(p) for p in self.index_pairs],
        }


def classify_fixed_point(A, B, x, tol: float = FIX_TOL, tau_act: float | None = None) -> FixClassification:
    """Decide whether ``x`` is in T(x) (fixed) and whether T(x) = {x} (strong)."""
    x = as_point(x, A.dim)
    branches = dr_branches(A, B, x, tau_act)
    image: list[np.ndarray] = []
    for br in branches:
        y = x + br.b - br.a
        if all(np.linalg.norm(y - z) > 1e-12 * (1.0 + np.linalg.norm(z)) for z in image):
            image.append(y)
    hits = [np.linalg.norm(y - x) <= tol for y in image]
    if all(hits):
        status = FixStatus.STRONG_FIXED
    elif any(hits):
        status = FixStatus.FIXED
    else:
        status = FixStatus.NOT_FIXED
    return FixClassification(status, np.array(image), [(br.a, br.b) for br in branches], [br.pair for br in branches])


def radius_certified(A, B, x_star, tau_act: float | None = None) -> float:
    """``min(delta1, delta2) / 2``, a guaranteed radius of attraction.

    Only meaningful when the pieces are convex; ``inf`` when no piece is
    inactive at ``x_star``.
    """
    cls = classify_fixed_point(A, B, x_star, tau_act=tau_act)
    if cls.status is not FixStatus.STRONG_FIXED:
        raise NotStrongFixedError(f"{np.asarray(x_star).tolist()} is {cls.status.value}, not a strong fixed point")
    return separation_gaps(A, B, x_star, tau_act).radius


@dataclass(frozen=True)
class RadiusEstimate:
    """Certified lower bound and a sampled estimate of the radius of attraction.

    ``sampled`` is the largest bisection level at which every drawn point
    kept its active pairs inside K(x*). It is a one-sided statistical
    check: a level can pass while unsampled points violate the inclusion,
    so it estimates the radius from above, up to the bisection resolution
    ``eps_hi / 2**bisection_steps``.
    """

    certified_lower: float
    sampled: float
    samples_per_level: int
    bisection_steps: int
    eps_hi: float

    @property
    def resolution(self) -> float:
        return self.eps_hi / 2.0 ** self.bisection_steps


def uniform_ball(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform points of the unit ball, by rejection from the cube."""
    out = np.empty((0, dim))
    while len(out) < n:
        cand = rng.uniform(-1.0, 1.0, size=(2 * n + 16, dim))
        out = np.vstack([out, cand[np.sum(cand * cand, axis=1) <= 1.0]])
    return out[:n]


def uniform_sphere(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def radius_sampled(A, B, x_star, eps_hi: float, samples: int = 2000, steps: int = 30, seed: int = 0,
                   boundary_fraction: float = 0.5, tau_act: float | None = None) -> RadiusEstimate:
    """Bisect the largest ball around ``x_star`` on which K stays inside K(x*).

    A fraction ``boundary_fraction`` of the samples lies on the bounding
    sphere of each ball, the rest uniformly inside it. The same unit-scale
    draws are rescaled at every level, so levels are compared on common
    random numbers.
    """
    if not eps_hi > 0.0:
        raise ValueError("eps_hi must be positive")
    x = as_point(x_star, A.dim)
    rng = np.random.default_rng(seed)
    n_shell = int(round(samples * boundary_fraction))
    unit = np.vstack([uniform_sphere(n_shell, x.size, rng), uniform_ball(samples - n_shell, x.size, rng)])
    K_star = active_pairs(A, B, x, tau_act)

    def passes(eps):
        return all(active_pairs(A, B, x + eps * u, tau_act) <= K_star for u in unit)

    try:
        certified = radius_certified(A, B, x, tau_act)
    except NotStrongFixedError:
        certified = 0.0
    if passes(eps_hi):
        return RadiusEstimate(certified, eps_hi, samples, 0, eps_hi)
    lo, hi = 0.0, eps_hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return RadiusEstimate(certified, lo, samples, steps, eps_hi)


class AccumulationResult(NamedTuple):
    max_min_distance: float
    coverage_gap: float


def _curve_target(target):
    if isinstance(target, UnionSet):
        if len(target) != 1:
            raise TypeError("accumulation targets must be a single sampled curve")
        target = target.pieces[0]
    if not hasattr(target, "sample"):
        raise TypeError(f"cannot sample target of type {type(target).__name__}")
    return target


def accumulation_analysis(traj_tail, target, angle_bins: int = 360) -> AccumulationResult:
    """How densely a trajectory tail covers a closed curve (the base circle F).

    ``max_min_distance`` is the largest distance from one of ``angle_bins``
    equally spaced target points to the tail; ``coverage_gap`` is the widest
    angular arc containing no tail point's angular projection.
    """
    tail = np.atleast_2d(np.asarray(traj_tail, dtype=float))
    if tail.size == 0:
        raise ValueError("tail must be nonempty")
    target = _curve_target(target)
    dist, _ = cKDTree(tail).query(target.sample(angle_bins))
    ang = np.sort(np.mod(target.angles(tail), 2.0 * np.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
    return AccumulationResult(float(dist.max()), float(gaps.max()))


def final_full_turn(t_values: np.ndarray) -> np.ndarray:
    """Mask of the parameters lying in the last full turn ``[t_end - 2 pi, t_end]``."""
    t = np.asarray(t_values)
    return t >= t[-1] - 2.0 * math.pi
