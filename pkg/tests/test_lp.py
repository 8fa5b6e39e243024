"""Simplex kernel tests: oracle cross-checks, duality, certificates."""

import numpy as np
import pytest

from gasflow.errors import ValidationError
from gasflow.lp import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    LpResolver,
    constraint_violation,
    dual_objective,
    dump_tableau,
    solve_lp,
)
from oracles import (
    check_farkas_certificate,
    check_ray_certificate,
    random_boxed_lp,
    vertex_oracle,
)


def assert_close(a, b, rel=1e-6):
    assert abs(a - b) <= rel * (1.0 + abs(a) + abs(b)), f"{a} vs {b}"


def test_single_variable_lower_bound():
    # minimize x subject to x >= 1, 0 <= x <= 10
    p = LpProblem([1.0], [[1.0]], [GE], [1.0], [0.0], [10.0])
    out = solve_lp(p)
    assert out.status == OPTIMAL
    assert_close(out.objective, 1.0)
    assert_close(out.x[0], 1.0)
    # marginal value of the >= right-hand side is +1 for a minimization
    assert_close(out.duals[0], 1.0)


def test_two_variable_knapsack_face():
    # minimize -x - y subject to x + y <= 1 on the unit box
    p = LpProblem([-1.0, -1.0], [[1.0, 1.0]], [LE], [1.0],
                  [0.0, 0.0], [1.0, 1.0])
    out = solve_lp(p)
    assert out.status == OPTIMAL
    assert_close(out.objective, -1.0)
    assert_close(float(np.sum(out.x)), 1.0)
    assert out.duals[0] <= 1e-9
    assert_close(out.duals[0], -1.0)


def test_five_by_five_against_oracle():
    rng = np.random.default_rng(501)
    p = random_boxed_lp(rng, max_vars=5, max_rows=5)
    assert p.n_vars == 5 and p.n_rows == 5
    status, obj, _ = vertex_oracle(p)
    out = solve_lp(p)
    assert out.status == status == OPTIMAL
    assert_close(out.objective, obj)


def test_oracle_sweep_small():
    """Sixty random instances against vertex enumeration, with duality
    and certificate checks on every one."""
    rng = np.random.default_rng(42)
    n_opt = n_inf = 0
    for _ in range(60):
        p = random_boxed_lp(rng)
        status, obj, _ = vertex_oracle(p)
        out = solve_lp(p)
        assert out.status == status
        if status == OPTIMAL:
            n_opt += 1
            assert_close(out.objective, obj)
            assert constraint_violation(p, out.x) <= 1e-6
            # strong duality, computed from duals and reduced costs only
            assert_close(dual_objective(p, out), out.objective)
            # complementary slackness on inequality rows
            ax = p.rows @ out.x
            for i, rel in enumerate(p.relations):
                if rel != EQ:
                    assert abs(out.duals[i] * (ax[i] - p.rhs[i])) <= 1e-5
        else:
            n_inf += 1
            check_farkas_certificate(p, out.certificate)
    assert n_opt >= 20 and n_inf >= 5, (n_opt, n_inf)


def test_dual_sign_convention():
    rng = np.random.default_rng(7)
    for _ in range(40):
        p = random_boxed_lp(rng)
        out = solve_lp(p)
        if out.status != OPTIMAL:
            continue
        for i, rel in enumerate(p.relations):
            if rel == LE:
                assert out.duals[i] <= 1e-7
            elif rel == GE:
                assert out.duals[i] >= -1e-7


def test_unbounded_ray():
    # the ray (1, 1) keeps the row slack and drives the objective down
    p = LpProblem([-1.0, -1.0], [[1.0, -1.0]], [LE], [4.0],
                  [0.0, 0.0], [np.inf, np.inf])
    out = solve_lp(p)
    assert out.status == UNBOUNDED
    check_ray_certificate(p, out.certificate)


def test_unbounded_free_variable():
    p = LpProblem([1.0], lower=[-np.inf], upper=[np.inf])
    out = solve_lp(p)
    assert out.status == UNBOUNDED
    check_ray_certificate(p, out.certificate)


def test_box_only_analytic():
    rng = np.random.default_rng(99)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        c = rng.uniform(-2, 2, n)
        lo = rng.uniform(-3, 0, n)
        up = lo + rng.uniform(0.1, 4, n)
        p = LpProblem(c, lower=lo, upper=up)
        out = solve_lp(p)
        assert out.status == OPTIMAL
        expect = float(np.sum(np.where(c > 0, c * lo, c * up)))
        assert_close(out.objective, expect)


def test_equality_square_system():
    # equalities pin the point; objective is irrelevant to the argmin
    A = np.array([[2.0, 1.0], [1.0, -1.0]])
    b = np.array([4.0, -1.0])
    x_true = np.linalg.solve(A, b)
    p = LpProblem([3.0, -1.0], A, [EQ, EQ], b, [-10.0, -10.0], [10.0, 10.0])
    out = solve_lp(p)
    assert out.status == OPTIMAL
    assert np.allclose(out.x, x_true, atol=1e-7)
    assert_close(dual_objective(p, out), out.objective)


def test_infeasible_certificate_crafted():
    # x + y <= 1 and x + y >= 2 cannot both hold
    p = LpProblem([1.0, 1.0], [[1, 1], [1, 1]], [LE, GE], [1.0, 2.0],
                  [0.0, 0.0], [5.0, 5.0])
    out = solve_lp(p)
    assert out.status == INFEASIBLE
    check_farkas_certificate(p, out.certificate)


def test_zero_row_presolve():
    # an all-zero row with impossible rhs is caught before phase 1
    p = LpProblem([1.0], [[0.0]], [GE], [1.0], [0.0], [2.0])
    out = solve_lp(p)
    assert out.status == INFEASIBLE
    check_farkas_certificate(p, out.certificate)
    assert out.iterations == 0
    # and a vacuous zero row is dropped with dual zero
    p2 = LpProblem([1.0], [[0.0]], [LE], [1.0], [0.0], [2.0])
    out2 = solve_lp(p2)
    assert out2.status == OPTIMAL
    assert out2.duals[0] == 0.0


def test_fixed_variables():
    p = LpProblem([1.0, 1.0], [[1.0, 1.0]], [GE], [2.0],
                  [1.5, 0.0], [1.5, 10.0])
    out = solve_lp(p)
    assert out.status == OPTIMAL
    assert_close(out.x[0], 1.5)
    assert_close(out.objective, 2.0)


def test_degenerate_assignment_polytope():
    """Assignment-style LP with massive degeneracy must terminate."""
    k = 4
    n = k * k
    rows, rels, rhs = [], [], []
    for i in range(k):
        row = np.zeros(n)
        row[i * k:(i + 1) * k] = 1.0
        rows.append(row)
        rels.append(EQ)
        rhs.append(1.0)
    for j in range(k):
        row = np.zeros(n)
        row[j::k] = 1.0
        rows.append(row)
        rels.append(EQ)
        rhs.append(1.0)
    c = np.ones(n)  # every permutation is optimal
    p = LpProblem(c, np.array(rows), rels, np.array(rhs),
                  np.zeros(n), np.ones(n))
    out = solve_lp(p)
    assert out.status == OPTIMAL
    assert_close(out.objective, float(k))
    assert_close(dual_objective(p, out), out.objective)


def test_determinism():
    rng = np.random.default_rng(1234)
    p = random_boxed_lp(rng)
    a = solve_lp(p)
    b = solve_lp(p)
    assert a.status == b.status
    if a.status == OPTIMAL:
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.duals, b.duals)
        assert a.objective == b.objective
        assert a.iterations == b.iterations


def test_validation_errors():
    with pytest.raises(ValidationError) as e:
        LpProblem([1.0, 2.0], [[1.0]], [LE], [1.0])
    assert e.value.details
    with pytest.raises(ValidationError):
        LpProblem([1.0], [[1.0]], ["<"], [1.0])
    with pytest.raises(ValidationError):
        LpProblem([1.0], lower=[2.0], upper=[1.0])
    with pytest.raises(ValidationError):
        LpProblem([np.nan])
    with pytest.raises(ValidationError):
        LpProblem([1.0], [[np.inf]], [LE], [1.0])


def test_double_equals_normalized():
    p = LpProblem([1.0], [[1.0]], ["=="], [2.0], [0.0], [5.0])
    assert p.relations == (EQ,)
    out = solve_lp(p)
    assert_close(out.x[0], 2.0)


def test_tableau_dump_stable():
    p = LpProblem([1.0, -0.5], [[1.0, 2.0]], [LE], [3.0], [0.0, 0.0],
                  [1.0, 2.0])
    text = dump_tableau(p)
    assert text == dump_tableau(p)
    lines = text.splitlines()
    assert lines[0].startswith("min")
    assert "<=" in lines[1]
    assert lines[-1].startswith("bounds")


# ------------------------------------------------------ resolver + warm


def test_resolver_matches_solve_lp():
    rng = np.random.default_rng(321)
    for _ in range(30):
        p = random_boxed_lp(rng)
        a = solve_lp(p)
        b = LpResolver(p).solve()
        assert a.status == b.status
        if a.status == OPTIMAL:
            assert_close(a.objective, b.objective)


def test_resolver_warm_start_over_rhs_chain():
    """A token carried across right-hand-side changes must reproduce the
    cold answer at every step; only the pivot count may differ."""
    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(12):
        p = random_boxed_lp(rng)
        if solve_lp(p).status != OPTIMAL:
            continue
        resolver = LpResolver(p)
        token = None
        rhs = p.rhs.copy()
        for _ in range(15):
            rhs = rhs + rng.uniform(-0.2, 0.2, rhs.size)
            warm = resolver.solve(rhs=rhs, start=token)
            cold = solve_lp(LpProblem(p.objective, p.rows, p.relations,
                                      rhs, p.lower, p.upper))
            assert warm.status == cold.status
            if cold.status == OPTIMAL:
                assert_close(warm.objective, cold.objective)
                assert constraint_violation(
                    LpProblem(p.objective, p.rows, p.relations, rhs,
                              p.lower, p.upper), warm.x) <= 1e-6
                checked += 1
            token = warm.start
    assert checked >= 60


def test_resolver_warm_start_over_bound_fixing():
    """Branch-and-bound style reuse: fix variables at their bounds one at
    a time and restart from the parent basis."""
    rng = np.random.default_rng(901)
    checked = 0
    for _ in range(40):
        p = random_boxed_lp(rng)
        base = solve_lp(p)
        if base.status != OPTIMAL:
            continue
        resolver = LpResolver(p)
        token = base.start
        lo, up = p.lower.copy(), p.upper.copy()
        for j in rng.permutation(p.n_vars)[:3]:
            if rng.random() < 0.5:
                lo = lo.copy()
                lo[j] = up[j]
            else:
                up = up.copy()
                up[j] = lo[j]
            warm = resolver.solve(lower=lo, upper=up, start=token)
            cold = solve_lp(LpProblem(p.objective, p.rows, p.relations,
                                      p.rhs, lo, up))
            assert warm.status == cold.status
            if cold.status != OPTIMAL:
                break
            assert_close(warm.objective, cold.objective)
            token = warm.start
            checked += 1
    assert checked >= 15


def test_resolver_ignores_malformed_tokens():
    rng = np.random.default_rng(5150)
    p = random_boxed_lp(rng)
    while solve_lp(p).status != OPTIMAL:
        p = random_boxed_lp(rng)
    cold = solve_lp(p)
    resolver = LpResolver(p)
    good = resolver.solve().start
    frauds = [
        {},
        {"m": -1, "N": 0, "basis": np.zeros(1, dtype=int),
         "bstat": np.zeros(1, dtype=int)},
        {**good, "basis": good["basis"][:-1]},
        {**good, "bstat": np.full_like(good["bstat"], 9)},
        {**good, "basis": np.full_like(good["basis"], 10 ** 6)},
        {**good, "Binv": np.zeros((2, 2))},
    ]
    for tok in frauds:
        out = resolver.solve(start=tok)
        assert out.status == OPTIMAL
        assert_close(out.objective, cold.objective)


def test_resolver_objective_override():
    p = LpProblem([1.0, 1.0], [[1.0, 1.0]], [GE], [1.0],
                  [0.0, 0.0], [2.0, 2.0])
    resolver = LpResolver(p)
    a = resolver.solve()
    b = resolver.solve(objective=np.array([-1.0, -2.0]))
    assert_close(a.objective, 1.0)
    assert_close(b.objective, -6.0)
    # the template itself is untouched
    assert_close(resolver.solve().objective, 1.0)


def test_resolver_rejects_bad_bounds():
    p = LpProblem([1.0], [[1.0]], [LE], [2.0], [0.0], [1.0])
    with pytest.raises(ValidationError):
        LpResolver(p).solve(lower=np.array([3.0]), upper=np.array([1.0]))
