import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bllab.integrate import IntegrationSpec
from bllab.lab.balls import BallCollection, discrete_inequality_report, discrete_rhs, indicator_sum
from bllab.lab.fibers import fiber_measure, volumebound_check
from bllab.lab.fremlin import Axis, GridTensor, dominates, fremlin_decomposition, fremlin_upper
from bllab.lab.mesh import build_mesh, degree_budget, expected_mesh_size, scaling_exponent
from bllab.lab.tubes import linearise_check, linearise_threshold, ptws_check, tube_count
from bllab.lab.zk import AffineFamily, chain_check, zk_functional
from bllab.linalg import Subspace
from bllab.oracles import affine_lattice_count
from bllab.polynomial import NonlinearDatum, Polynomial, PolynomialMap
from bllab.solver import ScalingError
from bllab.suite import lw2_datum

x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)


# -- balls ------------------------------------------------------------------------

def test_indicator_sum():
    C = BallCollection(1, [[0.0]], 1.0)
    assert indicator_sum(C, [0.0]) == 1
    assert indicator_sum(C.with_duplicate(), [1.0]) == 2
    assert indicator_sum(C, [1.5]) == 0


def test_ball_collection_validation():
    with pytest.raises(ValueError):
        BallCollection(1, [[0.0]], 0.0)


@pytest.mark.parametrize("delta", [0.1, 0.05])
def test_discrete_loomis_whitney_ratio_four(delta):
    # midpoint nodes of the 200^2 grid line up with the ball edges
    spec = IntegrationSpec([[-1, 1], [-1, 1]], method="tensor-quadrature", order=200)
    Cs = [BallCollection(1, [[0.0]], delta)] * 2
    rep = discrete_inequality_report(lw2_datum(), Cs, spec)
    assert rep["lhs"] == pytest.approx((2 * delta) ** 2, rel=1e-12)
    assert rep["rhs"] == pytest.approx(delta ** 2, rel=1e-12)
    assert rep["ratio"] == pytest.approx(4.0, rel=1e-12)


def test_duplicate_ball_leaves_ratio_unchanged():
    spec = IntegrationSpec([[-1, 1], [-1, 1]], method="tensor-quadrature", order=200)
    C1, C2 = BallCollection(1, [[0.0], [0.5]], 0.1), BallCollection(1, [[0.2]], 0.1)
    a = discrete_inequality_report(lw2_datum(), [C1, C2], spec)
    b = discrete_inequality_report(lw2_datum(), [C1.with_duplicate(1), C2], spec)
    assert b["lhs"] == pytest.approx(1.5 * a["lhs"])
    assert b["ratio"] == pytest.approx(a["ratio"])


def test_discrete_rhs_needs_common_delta():
    spec = IntegrationSpec([[-1, 1], [-1, 1]], samples=2000)
    with pytest.raises(ValueError):
        discrete_inequality_report(lw2_datum(), [BallCollection(1, [[0.0]], 0.1),
                                                 BallCollection(1, [[0.0]], 0.2)], spec)
    assert discrete_rhs(lw2_datum(), [BallCollection(1, [[0.0]], 0.1)] * 2) == pytest.approx(0.01)


# -- mesh -------------------------------------------------------------------------

def test_mesh_count_one_dimension():
    # spacing 0.1^1.5 ~ 0.0316 inside [-0.2, 0.2]
    m = build_mesh([0.0], 0.1, 1.5)
    assert m.spacing == pytest.approx(0.1 ** 1.5)
    assert len(m) == 13
    assert expected_mesh_size(1, 0.1, 1.5) == pytest.approx(12.65, abs=0.01)


def test_mesh_points_stay_in_dilated_ball():
    m = build_mesh([0.3, -0.2], 0.05, 1.5)
    assert np.all(np.linalg.norm(m.points - m.center, axis=1) <= 0.1 * (1 + 1e-9))


def test_mesh_errors():
    with pytest.raises(ValueError):
        build_mesh([0.0], 4.0, 1.5)
    with pytest.raises(ValueError):
        build_mesh([0.0], 0.1, 1.0)


@pytest.mark.parametrize("nj", [1, 2])
def test_mesh_scaling_exponent(nj):
    s = scaling_exponent(nj, [0.1, 0.05, 0.025, 0.0125], 1.5)
    assert s == pytest.approx(-0.5 * nj, abs=0.1 * nj)


def test_degree_budget():
    assert degree_budget([2], [BallCollection(1, [[0.0]], 0.1)], 1.5) == [26.0]
    assert degree_budget([3], [BallCollection(1, np.zeros((0, 1)), 0.1)], 1.5) == [0.0]


# -- tubes --------------------------------------------------------------------------

@pytest.mark.parametrize("slope", [1.0, 2.0, -0.7])
def test_tube_count_affine_oracle(slope):
    delta = 0.1
    B = PolynomialMap.linear([[slope, 0.0]], [0.05])
    mesh = build_mesh([0.0], delta, 1.5)
    rho = delta ** 1.25
    for x0 in (-0.05, 0.0, 0.03):
        pt = np.array([x0, 0.4])
        want = affine_lattice_count(slope, 0.05, x0, 0.0, mesh.spacing, delta, rho, 1e-3 * rho)
        assert tube_count(B, mesh, pt, delta) == want


def test_tube_count_outside_is_zero():
    mesh = build_mesh([0.0], 0.1, 1.5)
    assert tube_count(PolynomialMap((x,)), mesh, np.array([2.0, 0.0]), 0.1) == 0


def test_ptws_affine_and_trivial_cases():
    B = PolynomialMap((x,))
    r = ptws_check(B, [0.0], 0.1, np.array([0.02, 0.3]), 0.1)
    assert r["ok"] and r["lhs"] == 1.0 and r["count"] > 0
    r = ptws_check(B, [0.0], 0.1, np.array([0.5, 0.3]), 0.1)
    assert r["ok"] and r["lhs"] == 0.0
    r = ptws_check(PolynomialMap((x ** 2,)), [0.0], 0.1, np.array([0.0, 0.3]), 0.1)
    assert r["ok"] and r["lhs"] == 0.0


def test_ptws_exponent_order():
    with pytest.raises(ValueError):
        ptws_check(PolynomialMap((x,)), [0.0], 0.1, np.zeros(2), 0.1, alpha=1.2, beta=1.3)


def test_linearisation():
    assert linearise_check(PolynomialMap.linear(np.eye(2)), np.zeros(2), 0.5)["failures"] == 0
    curved = PolynomialMap((x, x + y ** 2))
    assert linearise_check(curved, np.zeros(2), 0.1)["skipped"]
    t = linearise_threshold(curved, np.array([0.0, 1.0]), samples=100)
    assert 1e-4 < t <= 1.0
    assert linearise_check(curved, np.array([0.0, 1.0]), t, samples=100)["failures"] == 0


# -- fibers -------------------------------------------------------------------------

@pytest.mark.parametrize("scale", [1.0, 2.0])
def test_fiber_measure_segment(scale):
    v = fiber_measure(PolynomialMap((scale * x,)), [0.0], [0.0, 0.0], 1.0)
    assert v == pytest.approx(2.0, rel=1e-3)


def test_volumebound_far_from_fiber():
    r = volumebound_check(PolynomialMap((x,)), [0.0], [0.9, 0.0], 0.1)
    assert not r["near"] and r["lhs"] == 0.0 and r["ok"]


def test_volumebound_flat_fiber():
    delta = 0.1
    r = volumebound_check(PolynomialMap((x,)), [0.0], [0.0, 0.3], delta)
    rho = delta ** 1.25
    assert r["lhs"] == pytest.approx(rho)
    assert r["rhs"] == pytest.approx(4 * rho, rel=1e-3)
    assert r["ok"]


# -- fremlin ------------------------------------------------------------------------

def _axes(rng, sizes):
    return tuple(Axis(np.arange(k)[:, None] * 0.1, rng.uniform(0.5, 2, k)) for k in sizes)


def test_fremlin_product_tensor(rng):
    axes = _axes(rng, (4, 3))
    f = [rng.uniform(0.1, 1, 4), rng.uniform(0.1, 1, 3)]
    T = GridTensor(axes, np.outer(*f))
    q = [1.0, 2.0]
    exact = math.prod(float(np.sum(a.weights * g ** qq) ** (1 / qq)) for a, g, qq in zip(axes, f, q))
    assert fremlin_upper(T, q) == pytest.approx(exact, rel=1e-6)


def test_fremlin_zero_and_diagonal():
    unit = Axis(np.array([[0.0], [1.0]]), np.ones(2))
    assert fremlin_upper(GridTensor((unit, unit), np.zeros((2, 2))), [1, 1]) == 0.0
    assert fremlin_upper(GridTensor((unit, unit), np.eye(2)), [1, 1]) == pytest.approx(4.0, rel=1e-6)


def test_fremlin_factors_dominate(rng):
    T = GridTensor(_axes(rng, (4, 3, 2)), rng.uniform(0, 1, (4, 3, 2)))
    b = fremlin_decomposition(T, [1.5, 2.0, 3.0])
    assert dominates(T, b.factors)
    assert b.value > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fremlin_monotone(seed):
    rng = np.random.default_rng(seed)
    axes = _axes(rng, (4, 3, 3))
    T = rng.uniform(0, 1, (4, 3, 3))
    bigger = T + rng.uniform(0, 0.3, T.shape) * (rng.random(T.shape) < 0.3)
    q = [1.5, 2.0, 3.0]
    assert fremlin_upper(GridTensor(axes, T), q) <= fremlin_upper(GridTensor(axes, bigger), q) + 1e-9


def test_fremlin_validation(rng):
    T = GridTensor(_axes(rng, (2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        fremlin_upper(T, [0.5, 2.0])
    with pytest.raises(ValueError):
        GridTensor(_axes(rng, (2, 2)), -np.ones((2, 2)))


# -- zk functional and the discretisation chain --------------------------------------

E1, E2 = Subspace.span([[1.0, 0.0]]), Subspace.span([[0.0, 1.0]])
ZK_SPEC = IntegrationSpec([[-6, 6], [-6, 6]], method="tensor-quadrature", order=240)


def test_zk_orthogonal_lines():
    # each unit window meets a line in a chord 2 sqrt(1 - t^2), which integrates to pi
    r = zk_functional([AffineFamily(E1, [[0.0, 0.0]]), AffineFamily(E2, [[0.0, 0.0]])], [1, 1], ZK_SPEC)
    assert r["lhs"] == pytest.approx(math.pi ** 2, rel=1e-3)
    assert r["bl_prime"] == pytest.approx(1.0)


def test_zk_parallel_lines_vanish():
    r = zk_functional([AffineFamily(E1, [[0.0, 0.0]]), AffineFamily(E1, [[0.0, 1.0]])], [1, 1], ZK_SPEC)
    assert math.isinf(r["bl_prime"]) and r["lhs"] == 0.0


def test_zk_scales_with_family_sizes():
    offs = [[0.0, -3.0], [0.0, 0.0], [0.0, 3.0]]
    one = zk_functional([AffineFamily(E1, [[0.0, 0.0]]), AffineFamily(E2, [[0.0, 0.0]])], [1, 1], ZK_SPEC)
    three = zk_functional([AffineFamily(E1, offs), AffineFamily(E2, np.array(offs)[:, ::-1])], [1, 1], ZK_SPEC)
    assert three["lhs"] / one["lhs"] == pytest.approx(9.0, rel=1e-3)
    assert three["rhs"] == pytest.approx(9.0)


def test_zk_scaling_error():
    with pytest.raises(ScalingError):
        zk_functional([AffineFamily(E1, [[0.0, 0.0]])], [1], ZK_SPEC)


def test_chain_check_loomis_whitney():
    Cs = [BallCollection(1, [[0.0], [0.4]], 0.1), BallCollection(1, [[0.1]], 0.1)]
    spec = IntegrationSpec([[-1, 1], [-1, 1]], method="tensor-quadrature", order=200)
    r = chain_check([[[1.0, 0.0]], [[0.0, 1.0]]], [[0.0], [0.0]], [1, 1], Cs, 0.1, spec)
    assert r["ok"]
    assert r["lhs"] == pytest.approx(2 * (0.2 * 0.2), rel=1e-9)
    assert 0 < r["ratio"] < 4


def test_chain_check_scaling_error():
    spec = IntegrationSpec([[-1, 1], [-1, 1]], samples=2000)
    with pytest.raises(ScalingError):
        chain_check([[[1.0, 0.0]]], [[0.0]], [1], [BallCollection(1, [[0.0]], 0.1)], 0.1, spec)
