"""Cylinder mantle and double spiral: a DR trajectory with a continuum of limit points.

Notation: ``a(t) = (cos t, sin t, e^(-t/2))`` lies on the cylinder mantle A and
``b_pm(t) = ((1 pm e^-t) cos t, (1 pm e^-t) sin t, e^(-t/2))`` on the two
spiral branches. ``d_pm(x; t) = 0.5 ||a(t) - b_pm(x)||^2``.

The closed forms below are written so that no catastrophic cancellation
occurs near ``x = t`` (``1 - cos`` via ``2 sin^2``, ``e^u - 1`` via ``expm1``);
the parameter steps shrink like ``e^(-2t)`` and would otherwise drown in
rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from numba import njit

from .engine import SelectionPolicy, StoppingConfig, StopReason, Trajectory, diagnose_with, dr_run, make_trajectory, map_run
from .sets import BaseCircle, CylinderMantle, SolidCylinder, SpiralBranch, spiral_curve
from .unions import UnionSet

T_MIN = 0.5
BISECT_WIDTH = 1e-13


class BracketError(RuntimeError):
    """The derivative does not change sign over the search bracket."""


class CrossCheckError(RuntimeError):
    """Specialized and generic computations disagree."""


def _sign(sign) -> int:
    if sign in ("+", 1, 1.0):
        return 1
    if sign in ("-", -1, -1.0):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def _check_t(t: float) -> float:
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"parameter must be >= 0, got {t}")
    return t


def a_of_t(t: float) -> np.ndarray:
    t = _check_t(t)
    return np.array([math.cos(t), math.sin(t), math.exp(-0.5 * t)])


def b_plus(t: float) -> np.ndarray:
    t = _check_t(t)
    r = 1.0 + math.exp(-t)
    return np.array([r * math.cos(t), r * math.sin(t), math.exp(-0.5 * t)])


def b_minus(t: float) -> np.ndarray:
    t = _check_t(t)
    r = 1.0 - math.exp(-t)
    return np.array([r * math.cos(t), r * math.sin(t), math.exp(-0.5 * t)])


def branch_point(sign, t: float) -> np.ndarray:
    return b_plus(t) if _sign(sign) > 0 else b_minus(t)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _dprime(sign, x, t):
    e = math.exp(-x)
    rho = 1.0 + sign * e
    drho = -sign * e
    half = math.sin(0.5 * (t - x))
    return drho * (sign * e + 2.0 * half * half) - rho * math.sin(t - x) + 0.5 * e * math.expm1(0.5 * (x - t))


@njit(cache=True)
def _dsecond(sign, x, t):
    e = math.exp(-x)
    rho = 1.0 + sign * e
    drho = -sign * e
    ddrho = sign * e
    return ((rho - ddrho) * math.cos(t - x) - 2.0 * drho * math.sin(t - x) + drho * drho + rho * ddrho
            - 0.25 * math.exp(-0.5 * (x + t)) + 0.5 * e)


@njit(cache=True)
def _bracket_top(t):
    return t - 2.0 * math.log1p(-math.exp(-0.5 * t))


@njit(cache=True)
def _next_param(sign, t):
    lo = t
    hi = _bracket_top(t)
    if not (_dprime(sign, lo, t) < 0.0 and _dprime(sign, hi, t) > 0.0):
        return math.nan
    while hi - lo > BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = _dprime(sign, mid, t)
        if g < 0.0:
            lo = mid
        elif g > 0.0:
            hi = mid
        else:
            return mid
    m = 0.5 * (lo + hi)
    curv = _dsecond(sign, m, t)
    if curv > 0.0:
        cand = m - _dprime(sign, m, t) / curv
        if lo <= cand <= hi:
            return cand
    return m


@njit(cache=True)
def _generate(sign, t1, stop_t, cap):
    ts = np.empty(cap)
    ts[0] = t1
    n = 1
    while n < cap and ts[n - 1] < stop_t:
        nxt = _next_param(sign, ts[n - 1])
        if not nxt > ts[n - 1]:
            ts[n] = nxt
            return ts[: n + 1], False
        ts[n] = nxt
        n += 1
    return ts[:n], True


# ---------------------------------------------------------------------------
# distance functions


def d_value(sign, x: float, t: float) -> float:
    """``0.5 ||a(t) - b_sign(x)||^2`` evaluated directly from the points."""
    diff = a_of_t(t) - branch_point(sign, x)
    return 0.5 * float(diff @ diff)


def d_derivative(sign, x: float, t: float) -> float:
    """Closed-form derivative of ``d_value`` in ``x``."""
    return float(_dprime(_sign(sign), float(x), float(t)))


def d_second(sign, x: float, t: float) -> float:
    """Closed-form second derivative of ``d_value`` in ``x``."""
    return float(_dsecond(_sign(sign), float(x), float(t)))


def f_gap(x: float, t: float) -> float:
    """``d_+(x; t) - d_-(x; t)``, by direct evaluation."""
    return d_value(+1, x, t) - d_value(-1, x, t)


def f_gap_closed_form(x: float, t: float) -> float:
    """``2 e^-x (1 - cos(x - t))``, computed without cancellation."""
    s = math.sin(0.5 * (x - t))
    return 4.0 * math.exp(-x) * s * s


def bracket(t: float) -> tuple[float, float]:
    """Search interval ``(t, t - 2 log(1 - e^(-t/2))]`` for the next parameter."""
    return float(t), float(_bracket_top(float(t)))


def next_parameter(t: float, sign=-1, t_min: float = T_MIN, validate: bool = True) -> float:
    """Parameter of the nearest point of branch ``sign`` to ``a(t)``.

    Bisection on the closed-form derivative over :func:`bracket` down to
    width 1e-13, followed by one guarded Newton step. With ``validate`` the
    result is compared against the global grid search of
    :class:`~drfeas.sets.SpiralBranch`.
    """
    sign = _sign(sign)
    t = float(t)
    if t < t_min:
        raise ValueError(f"t = {t} is below t_min = {t_min}")
    s = float(_next_param(sign, t))
    if not math.isfinite(s):
        lo, hi = bracket(t)
        raise BracketError(
            f"no sign change of d'_{'+' if sign > 0 else '-'} on [{lo!r}, {hi!r}] at t={t!r}: "
            f"d'(lo)={d_derivative(sign, lo, t)!r}, d'(hi)={d_derivative(sign, hi, t)!r}"
        )
    if validate:
        _validate_parameter(sign, t, s)
    return s


def next_sigma(t: float, t_min: float = T_MIN, validate: bool = True) -> float:
    """Inner-branch parameter ``sigma(t) > t`` of ``P_B(a(t))``."""
    return next_parameter(t, -1, t_min, validate)


def _validate_parameter(sign: int, t: float, s: float, tol: float = 1e-9) -> None:
    s_glob, _ = SpiralBranch(sign).nearest_parameter(a_of_t(t))
    if abs(s_glob - s) > tol:
        raise CrossCheckError(f"bracketed root {s!r} disagrees with global projection {s_glob!r} at t={t!r}")


@dataclass(frozen=True, eq=False)
class TkSequence:
    """Parameters ``t_1 < t_2 < ...`` visited by the spiral iteration."""

    t_values: np.ndarray
    reached: bool
    sign: int = -1

    def __len__(self) -> int:
        return len(self.t_values)

    def increments(self) -> np.ndarray:
        return np.diff(self.t_values)

    def bound_residuals(self) -> tuple[np.ndarray, np.ndarray]:
        """``1 - e^((t_k - t_{k+1})/2)`` and its upper bound ``e^(-t_k/2)``."""
        t = self.t_values
        return -np.expm1(0.5 * (t[:-1] - t[1:])), np.exp(-0.5 * t[:-1])


def generate_tk(t1: float, stop_t: float, cap: int, sign=-1, validate_below: float = 3.0) -> TkSequence:
    """Iterate :func:`next_parameter` from ``t1`` until ``t_k >= stop_t`` or ``cap`` values.

    Steps starting below ``validate_below`` are cross-checked against the
    global projection; above it the bracket lies in a region where the
    distance function is convex (see :func:`verify_claims`).
    """
    sign = _sign(sign)
    if not t1 > 0.0:
        raise ValueError("t1 must be > 0")
    if t1 < T_MIN:
        raise ValueError(f"t1 = {t1} is below t_min = {T_MIN}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    ts, ok = _generate(sign, float(t1), float(stop_t), int(cap))
    if not ok:
        t = float(ts[-2])
        next_parameter(t, sign, validate=False)  # raises with diagnostics
        raise BracketError(f"parameter sequence stalled at t={t!r}")
    ts = np.array(ts)
    if np.any(np.diff(ts) <= 0.0):
        raise RuntimeError("parameter sequence is not strictly increasing")
    for k in np.flatnonzero(ts[:-1] < validate_below):
        _validate_parameter(sign, float(ts[k]), float(ts[k + 1]))
    ts.setflags(write=False)
    return TkSequence(ts, bool(ts[-1] >= stop_t), sign)


# ---------------------------------------------------------------------------
# scene and runners


@dataclass(frozen=True)
class SpiralScene:
    """The cylinder mantle A and the double spiral B (both branches include F)."""

    t_max: float = 40.0
    includes_F: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.t_max < 20.0:
            raise ValueError("t_max must be >= 20")

    @property
    def A(self) -> UnionSet:
        return UnionSet.of(CylinderMantle())

    @property
    def B(self) -> UnionSet:
        """Inner branch first, so lowest-index selection prefers it on ties."""
        return UnionSet.of(SpiralBranch(-1, self.t_max), SpiralBranch(+1, self.t_max))

    @property
    def B_minus(self) -> UnionSet:
        return UnionSet.of(SpiralBranch(-1, self.t_max))

    @property
    def B_plus(self) -> UnionSet:
        return UnionSet.of(SpiralBranch(+1, self.t_max))

    @property
    def F(self) -> BaseCircle:
        return BaseCircle()


def _curve(fn, ts) -> np.ndarray:
    return np.stack([fn(t) for t in ts]) if len(ts) < 64 else _vector_curve(fn, np.asarray(ts))


def _vector_curve(fn, ts):
    if fn is a_of_t:
        return np.column_stack([np.cos(ts), np.sin(ts), np.exp(-0.5 * ts)])
    return spiral_curve(1 if fn is b_plus else -1, ts)


def _stop_index(ts: np.ndarray, stop_t: float | None) -> int | None:
    if stop_t is None:
        return None
    hit = np.flatnonzero(ts >= stop_t)
    return int(hit[0]) if hit.size else None


def dr_spiral_run(t1: float = 1.0, steps: int = 1000, stop_t: float | None = None,
                  cross_check: int = 50, scene: SpiralScene | None = None) -> Trajectory:
    """DR trajectory started at ``b_-(t1)``, built from the parameter sequence.

    Iterates alternate ``x_{2k} = b_-(t_k)`` and ``x_{2k+1} = a(t_k)``.
    The run stops after ``steps`` steps or once an iterate ``b_-(t_k)`` with
    ``t_k >= stop_t`` is produced. The first ``cross_check`` steps are
    replayed by the generic engine and must agree within 1e-8.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    scene = scene or SpiralScene()
    ts = generate_tk(t1, math.inf if stop_t is None else stop_t, steps // 2 + 2).t_values
    hit = _stop_index(ts, stop_t)
    n_steps = steps if hit is None else min(steps, 2 * hit)
    reason = StopReason.MAX_ITER if hit is None or 2 * hit > steps else StopReason.TARGET_REACHED
    K = (n_steps + 1) // 2 + 1
    ts = ts[:K]
    av, bm, bp = _curve(a_of_t, ts), _curve(b_minus, ts), _curve(b_plus, ts)
    if np.min(np.hypot(bm[:, 0], bm[:, 1])) <= 0.0:
        raise RuntimeError("spiral iterate on the cylinder axis")
    x0 = np.empty((2 * K, 3))
    x0[0::2], x0[1::2] = bm, av
    a = np.repeat(av, 2, axis=0)
    b = np.empty_like(x0)
    b[0::2] = bp
    b[1:-1:2] = bm[1:]
    b[-1] = np.nan
    x_next = np.empty_like(x0)
    x_next[0::2] = av
    x_next[1:-1:2] = bm[1:]
    pairs = np.zeros((2 * K, 2), dtype=np.int64)
    pairs[0::2, 1] = 1
    sl = slice(0, n_steps)
    dist_A = np.zeros(2 * K)
    dist_A[0::2] = np.exp(-ts)
    dist_B = np.zeros(2 * K)
    dist_B[1:-1:2] = np.linalg.norm(av[:-1] - bm[1:], axis=1)
    traj = make_trajectory(x0[sl], a[sl], b[sl], x_next[sl], pairs[sl], reason, method="dr",
                           dist_A=dist_A[sl].copy(), dist_B=dist_B[sl].copy(),
                           extras={"t_values": ts, "t1": float(t1)})
    traj = _with_diagnostics(traj)
    if cross_check:
        n = min(cross_check, n_steps)
        generic = dr_run(scene.A, scene.B, x0[0], StoppingConfig(max_iter=n), SelectionPolicy.lowest_index())
        if len(generic) < n:
            raise CrossCheckError(f"generic engine stopped after {len(generic)} of {n} steps")
        err = float(np.max(np.linalg.norm(generic.x_next[:n] - traj.x_next[:n], axis=1)))
        if err > 1e-8:
            raise CrossCheckError(f"generic and specialized DR differ by {err:.3e}")
        traj.extras["cross_check_error"] = err
    return traj


def _with_diagnostics(traj: Trajectory) -> Trajectory:
    return replace(traj, diagnostics=diagnose_with(traj, StoppingConfig()))


class MapVariant(str, Enum):
    INNER_VS_MANTLE = "inner-vs-mantle"
    OUTER_VS_SOLID_CYLINDER = "outer-vs-solid-cylinder"


def map_spiral_run(t1: float = 1.0, steps: int = 1000, variant: MapVariant | str = MapVariant.INNER_VS_MANTLE,
                   stop_t: float | None = None, cross_check: int = 20) -> Trajectory:
    """Alternating projections between the cylinder and one spiral branch.

    ``INNER_VS_MANTLE`` alternates the mantle and the inner branch, starting
    at ``b_-(t1)``; ``OUTER_VS_SOLID_CYLINDER`` alternates the solid cylinder
    and the outer branch, starting at ``b_+(t1)``. Step ``n`` records
    ``x = b(t_n)``, ``a = a(t_n)``, ``b = x_next = b(t_{n+1})``.
    """
    variant = MapVariant(variant)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    sign = -1 if variant is MapVariant.INNER_VS_MANTLE else 1
    curve = b_minus if sign < 0 else b_plus
    ts = generate_tk(t1, math.inf if stop_t is None else stop_t, steps + 1, sign).t_values
    hit = _stop_index(ts, stop_t)
    n_steps = steps if hit is None else min(steps, hit)
    reason = StopReason.MAX_ITER if hit is None or hit > steps else StopReason.TARGET_REACHED
    ts = ts[: n_steps + 1]
    bv, av = _curve(curve, ts), _curve(a_of_t, ts)
    traj = make_trajectory(bv[:-1], av[:-1], bv[1:], bv[1:], np.zeros((n_steps, 2)), reason, method="map",
                           dist_A=np.exp(-ts[:-1]), dist_B=np.linalg.norm(av[:-1] - bv[1:], axis=1),
                           extras={"t_values": ts, "t1": float(t1), "variant": variant.value})
    traj = _with_diagnostics(traj)
    if cross_check:
        n = min(cross_check, n_steps)
        A = UnionSet.of(CylinderMantle() if sign < 0 else SolidCylinder())
        B = UnionSet.of(SpiralBranch(sign))
        generic = map_run(A, B, bv[0], StoppingConfig(max_iter=n))
        err = float(np.max(np.linalg.norm(generic.x_next[:n] - traj.x_next[:n], axis=1)))
        if err > 1e-8:
            raise CrossCheckError(f"generic and specialized MAP differ by {err:.3e}")
        traj.extras["cross_check_error"] = err
    return traj


# ---------------------------------------------------------------------------
# claim verification


@dataclass(frozen=True)
class ClaimCheck:
    name: str
    t: float
    residual: float
    passed: bool


@dataclass
class SpiralReport:
    checks: list[ClaimCheck]
    convexity_threshold: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[ClaimCheck]:
        return [c for c in self.checks if not c.passed]

    def names(self) -> list[str]:
        return sorted({c.name for c in self.checks})

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "convexity_threshold": self.convexity_threshold,
            "checks": [vars(c) for c in self.checks],
        }


def convex_on_bracket(sign, t: float, samples: int = 65) -> float:
    """Minimum of ``d_second`` over the search bracket at ``t``."""
    lo, hi = bracket(t)
    return min(d_second(sign, x, t) for x in np.linspace(lo, hi, samples))


def verify_claims(t_grid: Sequence[float], tol: float = 1e-10, t_max: float = 40.0) -> SpiralReport:
    """Check the geometric identities of the construction on a grid of ``t``.

    Per grid point: the mantle projection of both branches is ``a(t)`` at
    distance ``e^-t``; reflection in the mantle swaps the branches;
    ``d'_-(t; t) = -e^(-2t)``; the nearest point of the double spiral to
    ``a(t)`` is an inner-branch point off F, with parameter obeying the
    increment bound; and for ``t >= 3`` ``d''_-`` is positive on the bracket.
    """
    mantle = CylinderMantle()
    scene = SpiralScene(t_max)
    checks: list[ClaimCheck] = []

    def add(name, t, residual, ok=None):
        residual = float(residual)
        checks.append(ClaimCheck(name, float(t), residual, bool(residual <= tol) if ok is None else bool(ok)))

    for t in t_grid:
        t = float(t)
        if not T_MIN <= t <= t_max:
            raise ValueError(f"grid point {t} outside [{T_MIN}, {t_max}]")
        at, bp, bm = a_of_t(t), b_plus(t), b_minus(t)
        for label, bt, other in (("+", bp, bm), ("-", bm, bp)):
            pr = mantle.project(bt)
            add(f"mantle_projection{label}", t, np.linalg.norm(pr.point - at))
            add(f"mantle_distance{label}", t, abs(pr.distance - math.exp(-t)))
            add(f"reflection_swap{label}", t, np.linalg.norm(2.0 * pr.point - bt - other))
        add("derivative_at_t", t, abs(d_derivative(-1, t, t) + math.exp(-2.0 * t)))

        sigma = next_parameter(t, -1, validate=False)
        tau = next_parameter(t, +1, validate=False)
        # the nearest outer point b_+(tau) is beaten by b_-(tau), hence by b_-(sigma)
        gap = f_gap_closed_form(tau, t)
        d_tau = float(np.linalg.norm(at - b_plus(tau)))
        add("inner_preference", t, gap, gap > 0.0 and np.linalg.norm(at - b_minus(sigma)) <= d_tau + 1e-15)
        s_glob, d_glob = scene.B_minus.pieces[0].nearest_parameter(at)
        add("global_agrees_sigma", t, abs(s_glob - sigma), abs(s_glob - sigma) <= 1e-9)
        d_sigma = float(np.linalg.norm(at - b_minus(sigma)))
        d_F = BaseCircle().project(at).distance
        add("distance_to_F", t, abs(d_F - math.exp(-0.5 * t)))
        add("projection_off_F", t, d_sigma, d_sigma <= math.exp(-t) < d_F and sigma < t_max)
        inc = -math.expm1(0.5 * (t - sigma))
        add("increment_bound", t, inc, 0.0 < inc <= math.exp(-0.5 * t) and sigma > t)
        if t >= 3.0:
            curv = convex_on_bracket(-1, t)
            add("convex_on_bracket", t, curv, curv > 0.0)

    grid = sorted(float(t) for t in t_grid)
    threshold = None
    for k in range(len(grid)):
        if all(convex_on_bracket(-1, t) > 0.0 for t in grid[k:]):
            threshold = grid[k]
            break
    return SpiralReport(checks, threshold)
