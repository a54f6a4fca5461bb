"""Acceptance criteria 1-12, one test each.

Every test evaluates all of its checks, prints one ``CRITERION n PASS|FAIL``
line (visible even under output capture) and then asserts.
"""

import io
import math
import time

import numpy as np
import pytest

from drfeas.analysis import (FixStatus, accumulation_analysis, classify_fixed_point, final_full_turn,
                             radius_certified, radius_sampled)
from drfeas.cli import write_trace
from drfeas.engine import (SelectionPolicy, StoppingConfig, StopReason, dr_run, enumerate_T, pair_operator)
from drfeas.lift import LiftedProblem, solve_lifted
from drfeas.sets import (AffineSubspace, Ball, BaseCircle, Box, CylinderMantle, Halfspace, Segment, Singleton,
                         SolidCylinder, Sphere, line_through)
from drfeas.spiral import (MapVariant, SpiralScene, a_of_t, b_minus, b_plus, d_derivative, d_value,
                           dr_spiral_run, map_spiral_run, verify_claims)
from drfeas.unions import UnionSet

CAP = 10**6
T_TARGET = 1.0 + 4.0 * math.pi


@pytest.fixture
def verdict(capsys):
    def report(n, title, checks):
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = "all checks hold" if not failed else "failed: " + ", ".join(failed)
        with capsys.disabled():
            print(f"\nCRITERION {n} {status}: {title}; {detail}")
        assert not failed, detail
    return report


def line(p, q):
    return line_through(np.asarray(p, float), np.asarray(q, float))


AXES = UnionSet.of(line([0, 0], [1, 0]), line([0, 0], [0, 1]))
AXES_LINE = UnionSet.of(line([1, 0], [0, 2]))


# ---------------------------------------------------------------------------


def test_c01_discrete_limit_cycle(verdict):
    checks = {}
    for eta in (0.25, 0.5, 1.0):
        A = UnionSet.of(line([0, 0], [1, 0]))
        B = UnionSet.of(Singleton(np.array([0.0, 0.0])), Singleton(np.array([7.0 + eta, eta])),
                        Singleton(np.array([7.0, -eta])))
        traj = dr_run(A, B, [7.0, eta], StoppingConfig(max_iter=100, cycle_tol=1e-10))
        gaps = np.linalg.norm(traj.a[-4:] - traj.b[-4:], axis=1)
        pts = {tuple(p) for p in np.round(traj.iterates()[-4:], 12)}
        checks[f"eta={eta} period 4 within 100"] = (traj.stop_reason is StopReason.CYCLE_DETECTED
                                                    and traj.cycle_period == 4 and len(traj) <= 100)
        checks[f"eta={eta} min gap = eta"] = abs(gaps.min() - eta) <= 1e-10
        checks[f"eta={eta} cycle points"] = pts == {(7.0, 0.0), (7.0, -eta), (7.0 + eta, 0.0), (7.0 + eta, eta)}
    verdict(1, "discrete limit cycle", checks)


def test_c02_radius_of_attraction(verdict):
    s1 = radius_sampled(AXES, AXES_LINE, [1.0, 0.0], eps_hi=2.0, samples=2000, steps=30, seed=0)
    s2 = radius_sampled(AXES, AXES_LINE, [0.0, 2.0], eps_hi=4.0, samples=2000, steps=30, seed=0)
    c1 = radius_certified(AXES, AXES_LINE, [1.0, 0.0])
    c2 = radius_certified(AXES, AXES_LINE, [0.0, 2.0])
    verdict(2, f"radius of attraction (sampled {s1.sampled:.6f}, {s2.sampled:.6f})", {
        "sampled (1,0) in [0.69, 0.7072]": 0.69 <= s1.sampled <= 0.7072,
        "sampled (0,2) in [1.38, 1.4143]": 1.38 <= s2.sampled <= 1.4143,
        "certified 0.5 and 1.0": abs(c1 - 0.5) <= 1e-12 and abs(c2 - 1.0) <= 1e-12,
        "certified <= sampled": c1 <= s1.sampled and c2 <= s2.sampled,
    })


def test_c03_basin_behavior(verdict):
    rng = np.random.default_rng(2024)
    x_star = np.array([1.0, 0.0])
    stays = converges = fixed = members = True
    n = 0
    while n < 100:
        u = rng.uniform(-1.0, 1.0, 2)
        if u @ u > 1.0:
            continue
        n += 1
        traj = dr_run(AXES, AXES_LINE, x_star + 0.49 * u, StoppingConfig(max_iter=10_000, tol_step=1e-12))
        stays &= bool(np.all(np.linalg.norm(traj.iterates() - x_star, axis=1) <= 0.49 + 1e-15))
        converges &= traj.stop_reason is StopReason.CONVERGED
        fixed &= classify_fixed_point(AXES, AXES_LINE, traj.x_next[-1]).status is not FixStatus.NOT_FIXED
        a = traj.a[-1]
        members &= AXES.distance(a) <= 1e-8 and AXES_LINE.distance(a) <= 1e-8
    verdict(3, "basin behavior on 100 starts", {
        "remain in closed ball": stays, "converge within 1e4": converges,
        "limits classify fixed": fixed, "shadow limit in A and B": members,
    })


def test_c04_weak_fixed_point(verdict):
    A = UnionSet.of(Singleton(np.array([-1.0])), Singleton(np.array([1.0])))
    B = UnionSet.of(Singleton(np.array([-2.0])), Singleton(np.array([1.0])))
    c = classify_fixed_point(A, B, [0.0])
    image = np.sort(enumerate_T(A, B, [0.0])[:, 0])
    rng = np.random.default_rng(4)
    exits = []
    for x0 in rng.uniform(-0.5, 0.0, 20):
        traj = dr_run(A, B, [x0], StoppingConfig(max_iter=100))
        exits.append(bool(np.any(np.abs(traj.iterates()[:, 0]) > 0.5)))
    verdict(4, "weak fixed point instability", {
        "fixed not strong": c.status is FixStatus.FIXED,
        "image {0, -1}": image.shape == (2,) and np.allclose(image, [-1.0, 0.0], atol=1e-12, rtol=0),
        "20 starts exit B(0, 0.5)": all(exits),
    })


def test_c05_convex_global_convergence(verdict):
    A = UnionSet.of(line([0, 1], [1, 2]))
    B = UnionSet.of(line([0, 3], [1, 1]))
    rng = np.random.default_rng(5)
    conv = fejer = True
    for x0 in rng.uniform(-10.0, 10.0, size=(100, 2)):
        traj = dr_run(A, B, x0)
        conv &= traj.stop_reason is StopReason.CONVERGED
        X = traj.iterates()
        dist = np.linalg.norm(X - X[-1], axis=1)
        fejer &= bool(np.all(dist[1:] <= dist[:-1] + 1e-10))
    verdict(5, "convex global convergence", {"all converge": conv, "Fejer monotone": fejer})


def test_c06_spiral_identities(verdict):
    rep = verify_claims(np.arange(0.5, 12.01, 0.5), tol=1e-10)
    rng = np.random.default_rng(6)
    h = 1e-6
    fd_ok = True
    for x, t in rng.uniform(1.0, 10.0, size=(100, 2)):
        fd = (d_value(-1, x + h, t) - d_value(-1, x - h, t)) / (2 * h)
        fd_ok &= abs(d_derivative(-1, x, t) - fd) <= 1e-6
    verdict(6, "spiral identities", {
        "verify_claims on grid": rep.passed, "derivative vs finite differences": fd_ok,
        "check families present": {"mantle_projection+", "mantle_distance-", "reflection_swap+",
                                   "inner_preference", "increment_bound", "derivative_at_t",
                                   "convex_on_bracket"} <= set(rep.names()),
    })


def _accumulation(traj, t_values, per_step):
    """Accumulation statistics over the final full turn restricted to t >= 6."""
    n = np.arange(len(traj) + 1)
    t = t_values[n // per_step]
    mask = final_full_turn(t) & (t >= 6.0)
    if not mask.any():
        return math.inf, 2 * math.pi
    res = accumulation_analysis(traj.iterates()[mask], BaseCircle())
    return res.max_min_distance, res.coverage_gap


def test_c07_continuous_limit_cycle(verdict):
    start = time.perf_counter()
    traj = dr_spiral_run(1.0, CAP, stop_t=T_TARGET)
    ts = traj.extras["t_values"]
    t_step = ts[np.arange(len(traj)) // 2]
    d = traj.diagnostics
    mmd, gap = _accumulation(traj, ts, 2)
    elapsed = time.perf_counter() - start
    verdict(7, f"continuous limit cycle (reached t={ts[-1]:.4f} of {T_TARGET:.4f} in {len(traj)} steps, "
               f"max_min_distance={mmd:.3f}, coverage_gap={gap:.3f})", {
        "t_k strictly increasing": bool(np.all(np.diff(ts) > 0.0)),
        "step norms <= e^-t_k": bool(np.all(traj.step_norm <= np.exp(-t_step) + 1e-12)),
        "not converged": not d.converged,
        "steps vanish": d.steps_vanish,
        "t_k >= 1 + 4 pi within cap": traj.stop_reason is StopReason.TARGET_REACHED,
        "max_min_distance <= 0.25": mmd <= 0.25,
        "coverage_gap <= 0.3": gap <= 0.3,
        "runtime <= 60 s": elapsed <= 60.0,
    })


def test_c08_generic_specialized_equivalence(verdict):
    scene = SpiralScene()
    spec = dr_spiral_run(1.0, 50, cross_check=0)
    gen = dr_run(scene.A, scene.B, b_minus(1.0), StoppingConfig(max_iter=50), SelectionPolicy.lowest_index())
    err = np.linalg.norm(gen.iterates() - spec.iterates(), axis=1).max() if len(gen) == 50 else math.inf
    verdict(8, f"generic vs specialized DR (max error {err:.2e})", {"50 iterates within 1e-8": err <= 1e-8})


def test_c09_map_corollaries(verdict):
    outer = map_spiral_run(1.0, CAP, MapVariant.OUTER_VS_SOLID_CYLINDER, stop_t=T_TARGET)
    ts = outer.extras["t_values"]
    gap_err = np.abs(np.linalg.norm(outer.x - outer.a, axis=1) - np.exp(-ts[:-1])).max()
    mmd, cov = _accumulation(outer, ts, 1)
    inner = map_spiral_run(1.0, 2000, MapVariant.INNER_VS_MANTLE)
    dr = dr_spiral_run(1.0, 4000)
    shadow_err = max(np.abs(inner.a - dr.a[0::2]).max(), np.abs(inner.b - dr.x_next[1::2]).max())
    verdict(9, f"MAP corollaries (outer reached t={ts[-1]:.4f}, max_min_distance={mmd:.3f}, "
               f"coverage_gap={cov:.3f})", {
        "outer gap = e^-t_n": gap_err <= 1e-10,
        "outer nonconvergent": not outer.diagnostics.converged and outer.diagnostics.steps_vanish,
        "outer t_n >= 1 + 4 pi within cap": outer.stop_reason is StopReason.TARGET_REACHED,
        "outer max_min_distance <= 0.25": mmd <= 0.25,
        "outer coverage_gap <= 0.3": cov <= 0.3,
        "inner shadows = DR shadows": shadow_err <= 1e-10,
    })


def test_c10_two_circles(verdict):
    A = UnionSet.of(Sphere(np.array([-2.0, 0.0]), 1.0), Sphere(np.array([2.0, 0.0]), 1.0))
    B = UnionSet.of(Sphere(np.zeros(2), 1.0))
    c = classify_fixed_point(A, B, [0.0, 0.0])
    shadows = c.distinct_shadows()
    verdict(10, "two circles", {
        "strong fixed": c.status is FixStatus.STRONG_FIXED,
        "exactly 2 shadows": len(shadows) == 2,
        "shadows in A and B": all(A.distance(s) <= 1e-10 and B.distance(s) <= 1e-10 for s in shadows),
    })


def test_c11_product_lift(verdict):
    r2 = math.sqrt(2.0)
    sets = [UnionSet.of(Halfspace(np.array([-1.0, 0.0]), 1.0)),
            UnionSet.of(Halfspace(np.array([0.0, -1.0]), 1.0)),
            UnionSet.of(Halfspace(np.array([1.0, 1.0]) / r2, r2))]
    problem = LiftedProblem.from_sets(sets)
    rng = np.random.default_rng(11)
    conv = feas = True
    for x0 in rng.uniform(-10.0, 10.0, size=(20, 2)):
        res = solve_lifted(problem, x0)
        conv &= res.feasible_point is not None
        feas &= max(res.residuals) <= 1e-8
    verdict(11, "product lift on three halfplanes", {"20 starts converge": conv, "candidates feasible": feas})


# ---------------------------------------------------------------------------
# property suites


def _rand_convex(rng, d=2):
    k = rng.integers(6)
    if k == 0:
        return Singleton(rng.uniform(-3, 3, d))
    if k == 1:
        return Segment(rng.uniform(-3, 3, d), rng.uniform(-3, 3, d))
    if k == 2:
        return line_through(rng.uniform(-3, 3, d), rng.uniform(-3, 3, d))
    if k == 3:
        n = rng.standard_normal(d)
        return Halfspace(n / np.linalg.norm(n), rng.uniform(-2, 2))
    if k == 4:
        return Ball(rng.uniform(-3, 3, d), rng.uniform(0, 2))
    lo = rng.uniform(-3, 1, d)
    return Box(lo, lo + rng.uniform(0, 3, d))


def _rand_piece(rng):
    k = rng.integers(4)
    if k == 0:
        return _rand_convex(rng, 3)
    if k == 1:
        return Sphere(rng.uniform(-2, 2, 3), rng.uniform(0.1, 2))
    return (CylinderMantle(), SolidCylinder(), BaseCircle())[rng.integers(3)]


def _through(rng, p):
    """A random line or circle containing ``p``."""
    if rng.integers(2):
        return AffineSubspace(p, (lambda u: u / np.linalg.norm(u))(rng.standard_normal(2))[None, :])
    c = p + rng.uniform(-2, 2, 2)
    return Sphere(c, float(np.linalg.norm(p - c)))


def test_c12_property_suites(verdict):
    rng = np.random.default_rng(12)
    N = 1000
    ok = dict.fromkeys(["idempotence", "convex nonexpansive", "T_ij firmly nonexpansive",
                        "A&B strong fixed", "replay determinism"], 0)
    for _ in range(N):
        piece = _rand_piece(rng)
        x = rng.uniform(-4, 4, 3)
        p = piece.project(x).point
        ok["idempotence"] += bool(np.linalg.norm(piece.project(p).point - p) <= 1e-10)

        piece = _rand_convex(rng)
        x, y = rng.uniform(-5, 5, (2, 2))
        ok["convex nonexpansive"] += bool(
            np.linalg.norm(piece.project(x).point - piece.project(y).point) <= np.linalg.norm(x - y) + 1e-10)

        Ai, Bj = _rand_convex(rng), _rand_convex(rng)
        x, y = rng.uniform(-5, 5, (2, 2))
        tx, ty = pair_operator(Ai, Bj, x), pair_operator(Ai, Bj, y)
        lhs = np.sum((tx - ty) ** 2) + np.sum(((x - tx) - (y - ty)) ** 2)
        ok["T_ij firmly nonexpansive"] += bool(lhs <= np.sum((x - y) ** 2) + 1e-9)

        p = rng.uniform(-3, 3, 2)
        A = UnionSet(tuple([_through(rng, p)] + [_rand_convex(rng) for _ in range(rng.integers(3))]))
        B = UnionSet(tuple([_through(rng, p)] + [_rand_convex(rng) for _ in range(rng.integers(3))]))
        ok["A&B strong fixed"] += classify_fixed_point(A, B, p).status is FixStatus.STRONG_FIXED

        seed = int(rng.integers(2**32))
        x0 = rng.uniform(-5, 5, 2)
        traces = []
        for _ in range(2):
            buf = io.StringIO()
            write_trace(dr_run(A, B, x0, StoppingConfig(max_iter=15), SelectionPolicy.seeded_random(seed)), buf)
            traces.append(buf.getvalue())
        ok["replay determinism"] += traces[0] == traces[1]
    verdict(12, f"property suites ({N} cases each; passes {ok})", {k: v == N for k, v in ok.items()})
