"""Uncertainty set construction, membership, sampling, vertices."""

import numpy as np
import pytest

from gasflow.errors import ValidationError
from gasflow.uncertainty import UncertaintySet, from_forecast


def two_arc_set(budget=1.0):
    cells = [("a", 0), ("a", 1), ("b", 0), ("b", 1)]
    return UncertaintySet(
        cells=cells,
        nominal=np.array([10.0, 10.0, 5.0, 5.0]),
        up_dev=np.array([2.0, 2.0, 1.0, 1.0]),
        down_dev=np.array([2.0, 2.0, 1.0, 1.0]),
        budget={"a": budget, "b": budget},
    )


def test_realize_and_membership():
    s = two_arc_set(budget=1.0)
    z = s.realize([1, 0, 0, 0], [0, 0, 0, 0])
    assert np.array_equal(z, [12.0, 10.0, 5.0, 5.0])
    assert s.contains(z)
    z = s.realize([1, 0, 1, 0], [0, 0, 0, 0])  # one deviation per arc
    assert s.contains(z)
    # two full deviations on the same arc break a budget of 1
    z = s.realize([1, 1, 0, 0], [0, 0, 0, 0])
    assert not s.contains(z)
    # outside the box entirely
    assert not s.contains([13.0, 10.0, 5.0, 5.0])


def test_budget_zero_is_nominal_point():
    s = two_arc_set(budget=0.0)
    assert s.contains(s.nominal)
    assert not s.contains(s.realize([0.4, 0, 0, 0], np.zeros(4)))
    assert len(s.vertices()) == 1
    assert np.array_equal(s.vertices()[0], s.nominal)


def test_full_budget_is_box():
    s = two_arc_set(budget=2.0)
    corner = s.realize(np.ones(4), np.zeros(4))
    assert s.contains(corner)
    # every corner of the box appears among the vertices
    verts = s.vertices()
    assert any(np.allclose(v, corner) for v in verts)
    assert len(verts) == 9 * 9  # per arc: sum_k C(2,k) 2^k = 9


def test_vertices_count_budget_one():
    s = two_arc_set(budget=1.0)
    # per arc: nominal or one of 2 cells deviated 2 ways -> 5 options
    assert len(s.vertices()) == 25
    for v in s.vertices():
        assert s.contains(v)


def test_sampling_stays_inside():
    s = two_arc_set(budget=1.0)
    rng = np.random.default_rng(3)
    zs = s.sample(40, rng)
    assert zs.shape == (40, 4)
    for z in zs:
        assert s.contains(z, tol=1e-9)
    # deterministic under the same seed
    zs2 = s.sample(40, np.random.default_rng(3))
    assert np.array_equal(zs, zs2)


def test_from_forecast_clipping():
    cells = [("a", 0), ("a", 1)]
    quantiles = {"a": np.array([[8.0, 10.0, 13.0],
                                [-4.0, 2.0, 5.0]])}
    s = from_forecast(cells, quantiles, budget=1.0)
    assert np.array_equal(s.nominal, [10.0, 2.0])
    assert np.array_equal(s.up_dev, [3.0, 3.0])
    # second cell's lower deviation reached below zero and was clipped
    assert np.array_equal(s.down_dev, [2.0, 2.0])
    assert s.clipped == 1
    z_low = s.realize(np.zeros(2), np.ones(2))
    assert np.all(z_low >= 0.0)


def test_from_forecast_budget_forms():
    cells = [("a", 0), ("b", 0)]
    quantiles = {"a": np.array([[1.0, 2.0, 3.0]]),
                 "b": np.array([[4.0, 5.0, 6.0]])}
    s1 = from_forecast(cells, quantiles, budget=1.0)
    assert s1.budget == {"a": 1.0, "b": 1.0}
    s2 = from_forecast(cells, quantiles, budget={"a": 0.0, "b": 1.0})
    assert s2.budget == {"a": 0.0, "b": 1.0}


def test_from_forecast_validation():
    cells = [("a", 0)]
    with pytest.raises(ValidationError) as err:
        from_forecast(cells, {}, budget=1.0)
    assert any("missing" in d for d in err.value.details)
    with pytest.raises(ValidationError) as err:
        from_forecast(cells, {"a": np.array([[3.0, 2.0, 1.0]])}, budget=1.0)
    assert any("ordered" in d for d in err.value.details)


def test_vertex_count_formula_matches_enumeration():
    for budget in (0.0, 0.5, 1.0, 1.5, 2.0):
        s = two_arc_set(budget=budget)
        assert s.n_vertices() == len(s.vertices())


def test_vertex_iterator_yields_each_pattern_once():
    s = two_arc_set(budget=1.0)
    seen = set()
    for xp, xm in s.iter_vertex_indicators():
        # the iterator reuses its buffers, so key on the contents
        key = (tuple(xp), tuple(xm))
        assert key not in seen
        seen.add(key)
        assert s.contains(s.realize(xp, xm))
        # never both directions on one cell
        assert not np.any((xp > 0) & (xm > 0))
    assert len(seen) == s.n_vertices() == 25


def test_vertex_iterator_respects_per_arc_budgets():
    cells = [("a", 0), ("a", 1), ("b", 0), ("b", 1)]
    s = UncertaintySet(
        cells=cells,
        nominal=np.array([10.0, 10.0, 5.0, 5.0]),
        up_dev=np.array([2.0, 2.0, 1.0, 1.0]),
        down_dev=np.array([2.0, 2.0, 1.0, 1.0]),
        budget={"a": 0.0, "b": 2.0},
    )
    pats = [(xp.copy(), xm.copy()) for xp, xm in s.iter_vertex_indicators()]
    assert len(pats) == s.n_vertices() == 9
    for xp, xm in pats:
        assert np.all(xp[:2] == 0) and np.all(xm[:2] == 0)


def test_set_validation():
    with pytest.raises(ValidationError):
        UncertaintySet(cells=[("a", 0)], nominal=np.array([1.0]),
                       up_dev=np.array([-0.5]), down_dev=np.array([0.0]),
                       budget={"a": 1.0})
    with pytest.raises(ValidationError):
        UncertaintySet(cells=[("a", 0)], nominal=np.array([1.0]),
                       up_dev=np.array([0.5]), down_dev=np.array([0.0]),
                       budget={})
