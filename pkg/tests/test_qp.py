import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iccbf_rl.barrier import cruise_clf, cruise_h0, koz_h0, kiz_h0
from iccbf_rl.dynamics import InputSet
from iccbf_rl.qp import (ConvexSubproblem, assemble_inspection_stage1_qp, assemble_inspection_stage2_qp,
                         assemble_stage1_qp, assemble_stage2_qp, brute_force_solve, minimal_slacks, solve,
                         solve_polyhedral)
from oracles import check_against_oracle, random_subproblem


def test_no_rows_gives_zero():
    p = ConvexSubproblem(2, np.zeros((0, 2)), np.zeros((0, 1)), np.zeros(0), [1.0], InputSet.ball(1.0))
    sol = solve(p)
    assert sol.ok and np.all(sol.u == 0) and sol.objective == 0.0


def test_one_dimensional_kkt():
    p = ConvexSubproblem(1, [[1.0]], [[1.0]], [1.0], [1e3], InputSet.box(0.25))
    sol = solve(p)
    assert sol.u[0] == pytest.approx(0.25, abs=1e-9)
    assert sol.slacks[0] == pytest.approx(0.75, abs=1e-9)


def test_interior_optimum_without_slack():
    # row u0 + u1 >= 1 active, ball large: u = (0.5, 0.5)
    p = ConvexSubproblem(2, [[1.0, 1.0]], [[1.0]], [1.0], [1e3], InputSet.ball(5.0))
    sol = solve(p)
    np.testing.assert_allclose(sol.u, [0.5, 0.5], atol=1e-7)
    assert sol.slacks[0] <= 1e-6


def test_invalid_subproblems():
    with pytest.raises(ValueError):
        ConvexSubproblem(1, [[1.0]], [[1.0]], [1.0], [0.0], InputSet.box(1.0))
    with pytest.raises(ValueError):
        ConvexSubproblem(1, [[np.nan]], [[1.0]], [1.0], [1.0], InputSet.box(1.0))
    with pytest.raises(ValueError):
        ConvexSubproblem(1, [[1.0], [2.0]], [[1.0], [1.0]], [1.0, 1.0], [1.0], InputSet.box(1.0))


def test_infeasible_hard_rows_diagnosed():
    # u >= 2 and u <= -2 cannot both hold
    p = ConvexSubproblem(1, [[1.0], [-1.0]], np.zeros((2, 1)), [2.0, 2.0], [1.0], InputSet.box(5.0))
    sol = solve(p)
    assert sol.status == "infeasible_diagnostic"
    assert np.all(np.isfinite(sol.u))


def test_max_iter_reported():
    rng = np.random.default_rng(3)
    p = random_subproblem(rng)
    while p.n_rows < 3:
        p = random_subproblem(rng)
    sol = solve(p, tol=1e-14, max_iter=2)
    assert sol.status in ("max_iter", "optimal")
    assert sol.iterations <= 4


def test_oracle_equivalence_sample():
    rng = np.random.default_rng(7)
    for _ in range(150):
        p = random_subproblem(rng)
        err = check_against_oracle(p, solve(p), brute_force_solve(p))
        assert err is None, err


def test_slack_complementarity():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        p = random_subproblem(rng)
        # make all slacked rows satisfiable without slack: rhs below a.u at u=0
        p = ConvexSubproblem(p.m, p.A_u, p.A_s, -np.abs(p.rhs) - 0.01, p.penalties, p.input_set)
        sol = solve(p)
        assert sol.ok
        assert np.all(sol.slacks <= 1e-6)
        checked += 1
    assert checked == 200


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50.0))
def test_scaling_invariance(seed, c):
    p = random_subproblem(np.random.default_rng(seed))
    a, b = solve(p), solve(p.scaled(c))
    np.testing.assert_allclose(a.u, b.u, atol=1e-5 * (1 + np.abs(a.u).max()))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_ball_respected(seed):
    rng = np.random.default_rng(seed)
    p = random_subproblem(rng)
    p = ConvexSubproblem(p.m, 50 * p.A_u, p.A_s, 100 * np.abs(p.rhs) + 10, p.penalties * 100,
                         InputSet.ball(0.3))
    sol = solve(p)
    assert np.linalg.norm(sol.u) <= 0.3 * (1 + 1e-9)


def test_minimal_slacks():
    p = ConvexSubproblem(1, [[1.0], [2.0]], [[2.0, 0.0], [0.0, 1.0]], [1.0, -1.0], [1.0, 1.0], InputSet.box(1.0))
    np.testing.assert_allclose(minimal_slacks(p, [0.0]), [0.5, 0.0])


def test_polyhedral_cross_check():
    rng = np.random.default_rng(5)
    for _ in range(20):
        A = rng.normal(size=(2, 2))
        p = ConvexSubproblem(2, A, np.eye(2), rng.normal(0, 2, 2), [5.0, 5.0], InputSet.ball(1.0))
        exact, poly = solve(p), solve_polyhedral(p)
        # the inscribed 32-gon loses at most 1 - cos(pi/32) of the radius
        assert poly.objective >= exact.objective - 1e-6
        assert np.linalg.norm(poly.u - exact.u) < 0.1
    with pytest.raises(ValueError):
        solve_polyhedral(ConvexSubproblem(1, [[1.0]], [[1.0]], [0.0], [1.0], InputSet.box(1.0)))


def test_brute_force_guards():
    p = ConvexSubproblem(1, [[1.0]], [[1.0]], [1.0], [1.0], InputSet.box(1.0))
    with pytest.raises(ValueError):
        brute_force_solve(p, grid_per_axis=50)


# -- assembly -----------------------------------------------------------------------------


def test_stage1_inactive_rows(models):
    m = models["cruise"]
    x = np.array([120.0, 24.0])  # V = 0, h = 76.8
    p = assemble_stage1_qp(cruise_h0(), cruise_clf(), 1.0, 1.0, x, 1e3, 1e3, m.input_set, m)
    sol = solve(p)
    assert np.allclose(sol.u, 0.0, atol=1e-9)


def test_stage1_row_structure(models):
    m = models["cruise"]
    x = np.array([60.0, 20.0])
    h, clf = cruise_h0(), cruise_clf()
    p = assemble_stage1_qp(h, clf, 2.0, 3.0, x, 1e3, 1e3, m.input_set, m)
    hv, _, lf, lg = h.lie_fn(m)(x)
    vv, _, lfv, lgv = clf.field.lie_fn(m)(x)
    u, s = np.array([0.1]), np.array([0.2, 0.3])
    # CBF row: lf + lg u + (alpha + gamma) h >= 0 ; CLF row: -lfv - lgv u - beta V + delta >= 0
    r = p.row_residuals(u, s)
    assert r[0] == pytest.approx(lf + lg @ u + (2.0 + 0.3) * hv, rel=1e-12)
    assert r[1] == pytest.approx(-lfv - lgv @ u - 3.0 * vv + 0.2, rel=1e-12)
    assert p.objective(u, s) == pytest.approx(0.005 + 1e3 * 0.5)


def test_stage1_on_cstar_boundary(cruise_env):
    ch, m = cruise_env.chain, cruise_env.model
    # bisect along d for b2 = 0 at v = 20
    lo, hi = 0.0, 200.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ch.values([mid, 20.0])[2] >= 0:
            hi = mid
        else:
            lo = mid
    x = np.array([hi, 20.0])
    p = assemble_stage1_qp(ch.h0, cruise_env.clf, 1.0, 1.0, x, 1e3, 1e3, m.input_set, m)
    sol = solve(p)
    hv, _, lf, lg = ch.h0.lie_fn(m)(x)
    gamma = sol.slacks[1]
    assert lf + lg @ sol.u + (1.0 + gamma) * hv >= -1e-6


def test_alpha_monotonicity(models):
    m = models["cruise"]
    x = np.array([40.0, 20.0])
    h, clf = cruise_h0(), cruise_clf()
    norms = []
    for a in np.linspace(0.1, 10.0, 40):
        p = assemble_stage1_qp(h, clf, a, 1.0, x, 1e3, 1e3, m.input_set, m)
        norms.append(np.linalg.norm(solve(p).u))
    assert np.all(np.diff(norms) <= 1e-7)


def test_notes_when_outside_safe_set(models):
    m = models["cruise"]
    p = assemble_stage1_qp(cruise_h0(), cruise_clf(), 1.0, 1.0, [0.0, 20.0], 1e3, 1e3, m.input_set, m)
    assert "cbf_slack_tightens" in p.notes


def test_stage2_same_structure(models):
    m = models["cruise"]
    x = np.array([50.0, 10.0])
    a = assemble_stage1_qp(cruise_h0(), cruise_clf(), 1.0, 2.0, x, 1e3, 1e3, m.input_set, m)
    b = assemble_stage2_qp(cruise_h0(), cruise_clf(), 1.0, 2.0, x, 1e3, 1e3, m.input_set, m)
    for k in ("A_u", "A_s", "rhs", "penalties"):
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_inspection_qps(models):
    m = models["inspection"]
    x = np.array([100.0, 20.0, -5.0, 0.01, -0.2, 0.05])
    p = assemble_inspection_stage1_qp(koz_h0(), kiz_h0(), 1.0, 2.0, x, 1e3, 2e3, m.input_set, m)
    assert p.n_rows == 2 and p.n_slack == 2
    np.testing.assert_array_equal(p.A_s, np.diag(p.A_s.diagonal()))
    np.testing.assert_array_equal(p.penalties, [1e3, 2e3])
    sol = solve(p)
    assert sol.ok and np.linalg.norm(sol.u) <= 0.05 * (1 + 1e-9)
    q = assemble_inspection_stage2_qp(koz_h0(), 1.0, x, 1e3, m.input_set, m)
    assert q.n_rows == 1 and q.n_slack == 1
