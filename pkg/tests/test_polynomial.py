import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bllab.oracles import diagonal_scan
from bllab.polynomial import (NonlinearDatum, Polynomial, PolynomialMap, RationalMap, WeightField,
                              fiber_points, map_from_json, stacked_jacobian)
from bllab.solver import ScalingError

x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)

# weight of (x, y, x - y^2) with p = 2/3 at (0, 1): rows (1,0), (0,1), (1,-2);
# value of 1/diagonal_scan on those rows, frozen
YOUNG_TRIPLE_WEIGHT = 1.4548315146289617


def test_evaluate():
    assert np.allclose(PolynomialMap((x, y)).evaluate([3.0, 4.0]), [3.0, 4.0])
    assert (x + y ** 2).evaluate([1.0, 2.0]) == pytest.approx(5.0)
    assert Polynomial(2, {}).evaluate([[1.0, 2.0], [3.0, 4.0]]).tolist() == [0.0, 0.0]


def test_evaluate_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        x.evaluate([1.0, 2.0, 3.0])


def test_jacobian():
    J = PolynomialMap((x + y ** 2,)).jacobian_at(np.array([0.5, 1.5]))
    assert np.allclose(J, [[1.0, 3.0]])
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    assert np.allclose(PolynomialMap.linear(A).jacobian_at(np.array([7.0, -2.0])), A)
    assert np.allclose(PolynomialMap((Polynomial.constant(2, 4.0),)).jacobian_at(np.zeros(2)), 0.0)


def test_degree_and_derivative():
    p = 3 * x ** 2 * y + y - 2
    assert p.degree == 3
    assert p.derivative(0).terms == {(1, 1): 6.0}
    assert p.derivative(1).terms == {(0, 0): 1.0, (2, 0): 3.0}


def test_compose():
    p = x * y
    q = p.compose([x + y, x - y])
    assert q.terms == {(2, 0): 1.0, (0, 2): -1.0}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.integers(0, 2**31 - 1))
def test_compose_matches_evaluation(pt, seed):
    rng = np.random.default_rng(seed)
    outer = Polynomial(2, {e: c for e, c in zip([(0, 0), (1, 0), (1, 1), (0, 2)], rng.uniform(-1, 1, 4))})
    inner = [x + 0.5 * y ** 2, y - x * y]
    pt = np.array(pt)
    direct = outer.evaluate(np.array([inner[0].evaluate(pt), inner[1].evaluate(pt)]))
    assert outer.compose(inner).evaluate(pt) == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_json_roundtrip():
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    again = NonlinearDatum.from_json(json.loads(json.dumps(d.to_json())))
    assert again.degrees == (1, 2)
    assert again.maps[1].components[0].terms == d.maps[1].components[0].terms


def test_rational_map_quotient_rule():
    one = Polynomial.constant(2, 1.0)
    R = RationalMap((x,), (one + y ** 2,))
    pt = np.array([2.0, 1.0])
    assert R.evaluate(pt)[0] == pytest.approx(1.0)
    assert np.allclose(R.jacobian_at(pt), [[0.5, -1.0]])
    assert R.degree == 4
    again = map_from_json(json.loads(json.dumps(R.to_json())))
    assert isinstance(again, RationalMap)


def test_datum_scaling_error():
    with pytest.raises(ScalingError):
        NonlinearDatum((PolynomialMap((x,)),), (1.0,))


def test_stacked_jacobian_shape():
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    assert stacked_jacobian(d, np.zeros((7, 2))).shape == (7, 2, 2)


# -- weight field ---------------------------------------------------------------

def test_weight_identity_map_is_one():
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((y,))), (1.0, 1.0))
    w = WeightField(d).weights(np.random.default_rng(0).uniform(-1, 1, (50, 2)))
    assert np.allclose(w, 1.0, atol=1e-12)


def test_weight_parabola_is_twice_abs_y(rng):
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    pts = rng.uniform(-1, 1, (200, 2))
    assert np.allclose(WeightField(d).weights(pts), 2 * np.abs(pts[:, 1]), rtol=1e-10, atol=1e-12)


def test_weight_vanishes_where_a_map_drops_rank():
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    assert WeightField(d).weight_at([0.3, 0.0]) == 0.0


def test_weight_young_triple_frozen():
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((y,)), PolynomialMap((x - y ** 2,))), (2 / 3,) * 3)
    w = WeightField(d).weight_at([0.0, 1.0])
    assert w == pytest.approx(YOUNG_TRIPLE_WEIGHT, rel=1e-9)
    oracle = 1 / diagonal_scan([[[1, 0]], [[0, 1]], [[1, -2]]], [2 / 3] * 3)
    assert w == pytest.approx(oracle, rel=1e-4)


# -- fibers ---------------------------------------------------------------------

def test_fiber_points_segment():
    pts = fiber_points(PolynomialMap((x,)), [0.0], [[-1, 1], [-1, 1]], 101)
    assert len(pts) > 0
    assert np.allclose(pts[:, 0], 0.0, atol=1e-12)
    assert pts[:, 1].min() == pytest.approx(-1.0) and pts[:, 1].max() == pytest.approx(1.0)


def test_fiber_points_empty():
    B = PolynomialMap((x ** 2 + y ** 2,))
    assert len(fiber_points(B, [-1.0], [[-1.5, 1.5], [-1.5, 1.5]], 101)) == 0


def test_fiber_points_circle_count():
    B = PolynomialMap((x ** 2 + y ** 2,))
    n = 301
    pts = fiber_points(B, [1.0], [[-1.5, 1.5], [-1.5, 1.5]], n)
    expected = 2 * math.pi / (3.0 / (n - 1))
    assert abs(len(pts) / expected - 1) < 0.05
    assert len(pts) == 640
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-3)
