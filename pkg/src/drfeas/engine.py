"""Douglas-Rachford and alternating-projection iterations.

A DR step at ``x`` picks an active branch ``(i, j)``, sets the shadow
``a in P_{A_i}(x)``, the reflected shadow ``b in P_{B_j}(2a - x)`` and moves
to ``x + b - a``. When several branches are active the choice is made by a
:class:`SelectionPolicy`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .sets import as_point
from .unions import Branch, dr_branches, map_branches


class PolicyKind(str, Enum):
    LOWEST_INDEX = "lowest-index"
    NEAREST_THEN_LOWEST_INDEX = "nearest-then-lowest-index"
    SEEDED_RANDOM = "seeded-random"


@dataclass(frozen=True)
class SelectionPolicy:
    """How a set-valued step is resolved.

    ``LOWEST_INDEX`` takes the lexicographically smallest ``(i, j)``;
    ``NEAREST_THEN_LOWEST_INDEX`` prefers the smallest shadow distances;
    ``SEEDED_RANDOM`` draws uniformly with a generator seeded per run.
    """

    kind: PolicyKind = PolicyKind.LOWEST_INDEX
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.SEEDED_RANDOM and self.seed is None:
            raise ValueError("seeded-random policy needs a seed")

    @classmethod
    def lowest_index(cls) -> "SelectionPolicy":
        return cls(PolicyKind.LOWEST_INDEX)

    @classmethod
    def nearest_then_lowest_index(cls) -> "SelectionPolicy":
        return cls(PolicyKind.NEAREST_THEN_LOWEST_INDEX)

    @classmethod
    def seeded_random(cls, seed: int) -> "SelectionPolicy":
        return cls(PolicyKind.SEEDED_RANDOM, int(seed))

    def selector(self) -> Callable[[Sequence[Branch]], Branch]:
        """A fresh chooser; seeded choosers carry their own generator state."""
        if self.kind is PolicyKind.LOWEST_INDEX:
            return lambda brs: min(brs, key=lambda br: (br.i, br.j))
        if self.kind is PolicyKind.NEAREST_THEN_LOWEST_INDEX:
            return lambda brs: min(brs, key=lambda br: (br.dist_a, br.dist_b, br.i, br.j))
        rng = np.random.default_rng(self.seed)

        def pick(brs):
            if len(brs) == 1:
                return brs[0]
            ordered = sorted(brs, key=lambda br: (br.i, br.j))
            return ordered[int(rng.integers(len(ordered)))]

        return pick


class StopReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    CYCLE_DETECTED = "cycle-detected"
    TARGET_REACHED = "target-reached"


@dataclass(frozen=True)
class StoppingConfig:
    max_iter: int = 100_000
    tol_step: float = 1e-12
    confirm_window: int = 10
    cycle_max_period: int = 64
    cycle_tol: float = 1e-10
    cycle_periods: int = 4
    tail_fraction: float = 0.25
    vanish_ratio: float = 0.1
    tau_act: float | None = None

    def __post_init__(self):
        if self.max_iter < 1 or self.tol_step <= 0 or self.confirm_window < 1:
            raise ValueError("need max_iter >= 1, tol_step > 0, confirm_window >= 1")
        if self.cycle_max_period < 2 or self.cycle_periods < 2:
            raise ValueError("cycle_max_period and cycle_periods must be >= 2")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class StepRecord:
    n: int
    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    x_next: np.ndarray
    pair: tuple[int, int]
    step_norm: float


@dataclass(frozen=True)
class Diagnostics:
    converged: bool
    limit: np.ndarray | None
    cycle_period: int | None
    steps_vanish: bool
    tail_diameter: float
    feasibility_gap: float

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "limit": None if self.limit is None else self.limit.tolist(),
            "cycle_period": self.cycle_period,
            "steps_vanish": self.steps_vanish,
            "tail_diameter": self.tail_diameter,
            "feasibility_gap": self.feasibility_gap,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Column storage of step records.

    ``x[n], a[n], b[n], x_next[n]`` are the iterate, shadow, reflected shadow
    (for MAP: projection onto B) and successor of step ``n``. ``dist_A[n]``
    is the distance of ``x[n]`` to A, ``dist_B[n]`` the distance to B of the
    point projected onto B (``2a - x`` for DR, ``a`` for MAP).
    """

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    x_next: np.ndarray
    pairs: np.ndarray
    step_norm: np.ndarray
    stop_reason: StopReason
    cycle_period: int | None = None
    diagnostics: Diagnostics | None = None
    method: str = "dr"
    dist_A: np.ndarray | None = None
    dist_B: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.step_norm)

    def __getitem__(self, n: int) -> StepRecord:
        n = range(len(self))[n]
        return StepRecord(n, self.x[n], self.a[n], self.b[n], self.x_next[n],
                          (int(self.pairs[n, 0]), int(self.pairs[n, 1])), float(self.step_norm[n]))

    @property
    def records(self) -> list[StepRecord]:
        return [self[n] for n in range(len(self))]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def iterates(self) -> np.ndarray:
        """``x_0, ..., x_N`` including the final successor."""
        return np.vstack([self.x, self.x_next[-1:]])


def _freeze(*arrays):
    for arr in arrays:
        if arr is not None:
            arr.setflags(write=False)


def make_trajectory(x, a, b, x_next, pairs, stop_reason, **kw) -> Trajectory:
    """Assemble a trajectory from per-step arrays; step norms are recomputed."""
    x, a, b, x_next = (np.asarray(v, dtype=float) for v in (x, a, b, x_next))
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    step = np.linalg.norm(x_next - x, axis=1)
    _freeze(x, a, b, x_next, pairs, step, kw.get("dist_A"), kw.get("dist_B"))
    return Trajectory(x, a, b, x_next, pairs, step, StopReason(stop_reason), **kw)


class _CycleWatch:
    """Incremental detection of ``||x_{n+p} - x_n|| <= tol`` over ``periods * p`` steps."""

    def __init__(self, dim: int, max_period: int, tol: float, periods: int):
        self.P = max_period
        self.tol = tol
        self.periods = periods
        self.buf = np.zeros((max_period + 1, dim))
        self.steps = np.zeros(max_period)
        self.runs = np.zeros(max_period + 1, dtype=np.int64)
        self.ps = np.arange(2, max_period + 1)
        self.count = 0

    def push(self, x: np.ndarray, step: float) -> int | None:
        n = self.count
        if n > 0:
            self.steps[(n - 1) % self.P] = step
        back = n - self.ps
        ok = back >= 0
        if ok.any():
            d = np.linalg.norm(self.buf[back[ok] % (self.P + 1)] - x, axis=1)
            hit = np.zeros(self.ps.size, dtype=bool)
            hit[ok] = d <= self.tol
            self.runs[2:] = np.where(hit, self.runs[2:] + 1, 0)
        self.buf[n % (self.P + 1)] = x
        self.count += 1
        for p in self.ps:
            if self.runs[p] >= self.periods * p:
                last = self.steps[[(n - 1 - k) % self.P for k in range(p)]]
                if last.max() > self.tol:
                    return int(p)
        return None


def _iterate(A, B, x0, config, policy, branch_fn, advance, method) -> Trajectory:
    config = config or StoppingConfig()
    policy = policy or SelectionPolicy()
    x = as_point(x0, A.dim)
    select = policy.selector()
    watch = _CycleWatch(x.size, config.cycle_max_period, config.cycle_tol, config.cycle_periods)
    watch.push(x, math.nan)
    xs, As, Bs, nxt, prs, dA, dB = [], [], [], [], [], [], []
    small = 0
    period = None
    reason = StopReason.MAX_ITER
    for _ in range(config.max_iter):
        br = select(branch_fn(A, B, x, config.tau_act))
        x_next = advance(x, br)
        step = float(np.linalg.norm(x_next - x))
        xs.append(x), As.append(br.a), Bs.append(br.b), nxt.append(x_next), prs.append(br.pair)
        dA.append(br.dist_a), dB.append(br.dist_b)
        small = small + 1 if step < config.tol_step else 0
        if small >= config.confirm_window:
            reason = StopReason.CONVERGED
            break
        period = watch.push(x_next, step)
        if period is not None:
            reason = StopReason.CYCLE_DETECTED
            break
        x = x_next
    traj = make_trajectory(xs, As, Bs, nxt, prs, reason, cycle_period=period, method=method,
                           dist_A=np.array(dA), dist_B=np.array(dB))
    return replace(traj, diagnostics=diagnose_with(traj, config))


def dr_step(A, B, x, policy: SelectionPolicy | None = None, select=None) -> StepRecord:
    """One Douglas-Rachford step from ``x``."""
    select = select or (policy or SelectionPolicy()).selector()
    x = as_point(x, A.dim)
    br = select(dr_branches(A, B, x))
    x_next = x + br.b - br.a
    return StepRecord(0, x, br.a, br.b, x_next, br.pair, float(np.linalg.norm(x_next - x)))


def enumerate_T(A, B, x, tau_act: float | None = None) -> np.ndarray:
    """All distinct points ``x + b - a`` over active branches, one row each."""
    x = as_point(x, A.dim)
    out: list[np.ndarray] = []
    for br in dr_branches(A, B, x, tau_act):
        y = x + br.b - br.a
        if not any(np.linalg.norm(y - z) <= 1e-12 * (1.0 + np.linalg.norm(z)) for z in out):
            out.append(y)
    return np.array(out)


def pair_operator(Ai, Bj, x) -> np.ndarray:
    """Single-pair DR operator ``T_ij`` (single-valued for convex pieces)."""
    x = as_point(x, Ai.dim)
    a = Ai.project(x).point
    return x + Bj.project(2.0 * a - x).point - a


def dr_run(A, B, x0, config: StoppingConfig | None = None, policy: SelectionPolicy | None = None) -> Trajectory:
    """Iterate DR from ``x0`` until convergence, a detected cycle or ``max_iter``."""
    return _iterate(A, B, x0, config, policy, dr_branches, lambda x, br: x + br.b - br.a, "dr")


def map_run(A, B, x0, config: StoppingConfig | None = None, policy: SelectionPolicy | None = None) -> Trajectory:
    """Alternating projections ``x -> a in P_A(x) -> b in P_B(a)``; ``x_next = b``."""
    return _iterate(A, B, x0, config, policy, map_branches, lambda x, br: br.b, "map")


def point_cloud_diameter(pts: np.ndarray) -> float:
    """Largest pairwise distance (exact; branch and bound for large clouds)."""
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return 0.0
    if pts.shape[1] == 1:
        return float(pts.max() - pts.min())
    if len(pts) <= 4000:
        return float(pdist(pts).max())
    return _diameter_bnb(pts)


def _diameter_bnb(pts: np.ndarray, leaf: int = 512) -> float:
    """Exact diameter by best-first branch and bound over median kd splits."""

    def node(ix):
        p = pts[ix]
        return ix, p.min(axis=0), p.max(axis=0)

    def bound(u, v):
        ext = np.maximum(np.abs(u[2] - v[1]), np.abs(v[2] - u[1]))
        return float(np.sqrt(ext @ ext))

    def split(u):
        ix, lo, hi = u
        ax = int(np.argmax(hi - lo))
        order = ix[np.argsort(pts[ix, ax], kind="stable")]
        h = len(order) // 2
        return node(order[:h]), node(order[h:])

    root = node(np.arange(len(pts)))
    best = 0.0
    heap = [(-bound(root, root), 0, root, root)]
    tick = 1
    while heap:
        neg, _, u, v = heapq.heappop(heap)
        if -neg <= best:
            break
        if len(u[0]) * len(v[0]) <= leaf * leaf:
            best = max(best, float(cdist(pts[u[0]], pts[v[0]]).max()))
            continue
        if u is v:
            l, r = split(u)
            children = [(l, l), (l, r), (r, r)]
        elif len(u[0]) >= len(v[0]):
            children = [(c, v) for c in split(u)]
        else:
            children = [(u, c) for c in split(v)]
        for c in children:
            ub = bound(*c)
            if ub > best:
                heapq.heappush(heap, (-ub, tick, c[0], c[1]))
                tick += 1
    return best


def detect_cycle(X: np.ndarray, max_period: int = 64, tol: float = 1e-10, periods: int = 4) -> int | None:
    """Smallest ``p >= 2`` with ``||X[n+p] - X[n]|| <= tol`` over the last ``periods * p`` iterates."""
    N = len(X)
    for p in range(2, max_period + 1):
        w = periods * p
        if N < w + p:
            break
        if np.all(np.linalg.norm(X[-w:] - X[-w - p:-p], axis=1) <= tol):
            if np.linalg.norm(np.diff(X[-p - 1:], axis=0), axis=1).max() > tol:
                return p
    return None


def diagnose(traj: Trajectory, cycle_max_period: int = 64, cycle_tol: float = 1e-10, **kw) -> Diagnostics:
    """Convergence, cycle and tail statistics of a trajectory.

    Keyword arguments override the remaining :class:`StoppingConfig` fields
    (``tol_step``, ``confirm_window``, ``cycle_periods``, ``tail_fraction``,
    ``vanish_ratio``).
    """
    config = StoppingConfig(cycle_max_period=cycle_max_period, cycle_tol=cycle_tol, **kw)
    return diagnose_with(traj, config)


def diagnose_with(traj: Trajectory, config: StoppingConfig) -> Diagnostics:
    if len(traj) == 0:
        raise ValueError("cannot diagnose an empty trajectory")
    steps = traj.step_norm
    N = len(steps)
    w = config.confirm_window
    converged = N >= w and bool(np.all(steps[-w:] < config.tol_step))
    X = traj.iterates()
    period = None if converged else detect_cycle(X, config.cycle_max_period, config.cycle_tol, config.cycle_periods)
    m = max(1, math.ceil(N * config.tail_fraction))
    tail_max = float(steps[-m:].max())
    head_max = float(steps[:m].max())
    vanish = period is None and (tail_max < config.tol_step or tail_max <= config.vanish_ratio * head_max)
    gap = float(np.linalg.norm(traj.a[-m:] - traj.b[-m:], axis=1).min())
    return Diagnostics(
        converged=converged,
        limit=X[-1].copy() if converged else None,
        cycle_period=period,
        steps_vanish=bool(vanish),
        tail_diameter=point_cloud_diameter(X[-(m + 1):]),
        feasibility_gap=gap,
    )
