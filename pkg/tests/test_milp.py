"""Branch-and-bound tests against the exhaustive enumeration oracle."""

import numpy as np
import pytest

from gasflow.errors import ResourceLimit, ValidationError
from gasflow.lp import GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, constraint_violation
from gasflow.milp import MilpProblem, enumerate_oracle, solve_milp
from oracles import random_boxed_milp


def assert_close(a, b, rel=1e-6):
    assert abs(a - b) <= rel * (1.0 + abs(a) + abs(b)), f"{a} vs {b}"


def test_small_knapsack():
    # maximize 5a + 4b + 3c with weights 2,3,1 and budget 4
    p = MilpProblem([-5.0, -4.0, -3.0], [[2.0, 3.0, 1.0]], [LE], [4.0],
                    [0, 0, 0], [1, 1, 1], integers=[0, 1, 2])
    out = solve_milp(p)
    assert out.status == OPTIMAL
    assert_close(out.objective, -8.0)
    assert np.array_equal(out.x, [1.0, 0.0, 1.0])


def test_rounding_matters():
    # LP relaxation wants x = 1.5; the integer optimum sits at 1
    p = MilpProblem([-1.0], [[2.0]], [LE], [3.0], [0.0], [5.0], integers=[0])
    out = solve_milp(p)
    assert out.status == OPTIMAL
    assert_close(out.objective, -1.0)
    assert out.x[0] == 1.0


def test_oracle_sweep_small():
    rng = np.random.default_rng(77)
    n_opt = n_inf = 0
    for _ in range(30):
        p = random_boxed_milp(rng)
        ref = enumerate_oracle(p)
        out = solve_milp(p)
        assert out.status == ref.status
        if ref.status == OPTIMAL:
            n_opt += 1
            assert_close(out.objective, ref.objective)
            assert constraint_violation(p, out.x) <= 1e-5
            frac = np.abs(out.x[p.integers] - np.round(out.x[p.integers]))
            assert np.all(frac <= 1e-9)
        else:
            n_inf += 1
    assert n_opt >= 10, (n_opt, n_inf)


def test_continuous_only_matches_lp():
    from gasflow.lp import LpProblem, solve_lp

    p = MilpProblem([1.0, -2.0], [[1.0, 1.0]], [LE], [3.0],
                    [0.0, 0.0], [2.0, 2.0], integers=[])
    out = solve_milp(p)
    ref = solve_lp(LpProblem([1.0, -2.0], [[1.0, 1.0]], [LE], [3.0],
                             [0.0, 0.0], [2.0, 2.0]))
    assert out.status == OPTIMAL
    assert_close(out.objective, ref.objective)


def test_integer_infeasible_but_lp_feasible():
    # 0.4 <= x <= 0.6 admits no integer
    p = MilpProblem([1.0], lower=[0.4], upper=[0.6], integers=[0])
    out = solve_milp(p)
    assert out.status == INFEASIBLE
    assert enumerate_oracle(p).status == INFEASIBLE


def test_unbounded_with_boxed_integers():
    p = MilpProblem([-1.0, 0.0], [[0.0, 1.0]], [GE], [0.0],
                    [0.0, 0.0], [np.inf, 1.0], integers=[1])
    out = solve_milp(p)
    assert out.status == UNBOUNDED


def test_node_limit():
    rng = np.random.default_rng(5)
    # A 10-variable instance that needs more than one node.
    n = 10
    c = -rng.uniform(1, 2, n)
    w = rng.uniform(1, 2, n)
    p = MilpProblem(c, [w], [LE], [float(np.sum(w) / 2)],
                    np.zeros(n), np.ones(n), integers=range(n))
    with pytest.raises(ResourceLimit):
        solve_milp(p, node_limit=1)


def test_node_log_shape():
    p = MilpProblem([-1.0, -1.0], [[1.0, 2.0]], [LE], [2.0],
                    [0, 0], [1, 1], integers=[0, 1])
    out = solve_milp(p)
    assert out.status == OPTIMAL
    assert out.nodes == len(out.node_log)
    ids = [rec[0] for rec in out.node_log]
    assert len(ids) == len(set(ids))
    for _, depth, bound, var in out.node_log:
        assert depth >= 0
        assert var is None or var in (0, 1)


def test_determinism():
    rng = np.random.default_rng(123)
    p = random_boxed_milp(rng)
    a = solve_milp(p)
    b = solve_milp(p)
    assert a.status == b.status
    if a.status == OPTIMAL:
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective
        assert a.node_log == b.node_log


def test_validation():
    with pytest.raises(ValidationError):
        MilpProblem([1.0], integers=[3])
    with pytest.raises(ValidationError):
        MilpProblem([1.0], lower=[0.0], upper=[np.inf], integers=[0])
