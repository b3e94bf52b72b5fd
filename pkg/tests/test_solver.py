import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bllab.linalg import Subspace, kernel, wedge_volume
from bllab.oracles import diagonal_scan, two_line_bl_prime
from bllab.solver import (BLDatum, GaussianInput, ScalingError, SolverOptions, bl_constant,
                          bl_constant_batch, bl_prime, bl_restricted, critical_split_check,
                          factorization_check, fixed_point_trace, gaussian_ratio, random_spd,
                          transform_datum)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
E = np.eye(3)


def lw2():
    return BLDatum(2, (np.eye(2)[:1], np.eye(2)[1:]), (1.0, 1.0))


def skew(th):
    return BLDatum(2, ([[1.0, 0.0]], [[math.cos(th), math.sin(th)]]), (1.0, 1.0))


# -- gaussian ratio -------------------------------------------------------------

def test_gaussian_ratio_loomis_whitney_identity():
    assert gaussian_ratio(lw2(), GaussianInput.identity((1, 1))) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_gaussian_ratio_scaling_invariance(c):
    A = GaussianInput.identity((1, 1)).scaled(c)
    assert gaussian_ratio(lw2(), A) == pytest.approx(1.0, rel=1e-12)


def test_gaussian_ratio_two_lines_closed_form():
    # det M = sin^2(th) for p = (1, 1) at A = I, so the ratio is 1/|sin th|
    th = 0.9
    assert gaussian_ratio(skew(th), GaussianInput.identity((1, 1))) == pytest.approx(1 / math.sin(th))


def test_gaussian_input_validation():
    with pytest.raises(ValueError):
        GaussianInput(([[1.0, 2.0], [0.0, 1.0]],))
    with pytest.raises(ValueError):
        GaussianInput(([[-1.0]],))
    with pytest.raises(ValueError):
        gaussian_ratio(lw2(), GaussianInput.identity((2, 1)))


# -- exact constants ------------------------------------------------------------

@pytest.mark.parametrize("datum", [
    lw2(),
    BLDatum(3, (E[[1, 2]], E[[0, 2]], E[[0, 1]]), (0.5, 0.5, 0.5)),
    BLDatum(2, (np.eye(2), np.eye(2)), (0.5, 0.5)),
], ids=["lw2", "lw3", "holder"])
def test_unit_constants(datum):
    r = bl_constant(datum)
    assert r.value == pytest.approx(1.0, abs=1e-8)
    assert r.status == "converged"


@pytest.mark.parametrize("th", [math.pi / 6, math.pi / 4, 1.2])
def test_skew_pair(th):
    assert bl_constant(skew(th)).value == pytest.approx(1 / math.sin(th), rel=1e-8)


def test_young_triple_against_diagonal_oracle():
    maps = ([[1.0, 0.0]], [[0.0, 1.0]], [[1.0, -1.0]])
    p = (2 / 3,) * 3
    assert bl_constant(BLDatum.from_maps(maps, p)).value == pytest.approx(diagonal_scan(maps, p), rel=1e-8)


def test_young_triple_frozen_value():
    # closed form (p^{1/p} / p'^{1/p'})^{3/2} at p = 3/2, p' = 3, which is sqrt(3)/2
    maps = ([[1.0, 0.0]], [[0.0, 1.0]], [[1.0, -1.0]])
    v = bl_constant(BLDatum.from_maps(maps, (2 / 3,) * 3)).value
    assert v == pytest.approx(math.sqrt(3) / 2, rel=1e-12)


def test_restart_spread_small_on_extremisable_data():
    r = bl_constant(BLDatum.from_json(json.loads((CONFIGS / "young_triple.json").read_text())))
    assert r.restart_spread < 1e-6
    assert len(r.restart_values) == SolverOptions().restarts + 1


def test_zero_exponent_map_is_dropped():
    d = BLDatum(2, (np.eye(2)[:1], np.eye(2)[1:], np.array([[3.0, 1.0]])), (1.0, 1.0, 0.0))
    assert bl_constant(d).value == pytest.approx(1.0)


# -- infinite cases and errors --------------------------------------------------

def test_parallel_maps_diverge_with_certificate():
    d = BLDatum(2, ([[1.0, 0.0]], [[2.0, 0.0]]), (1.0, 1.0))
    r = bl_constant(d)
    assert math.isinf(r.value)
    assert r.status == "diverged-to-infinity"
    V = r.prescreen_subspace
    assert V is not None and V.equals(Subspace.span([[0.0, 1.0]]))


def test_divergence_without_prescreen():
    d = BLDatum(2, ([[1.0, 0.0]], [[2.0, 0.0]]), (1.0, 1.0))
    r = bl_constant(d, SolverOptions(prescreen=False, max_iter=2000))
    assert math.isinf(r.value)


def test_scaling_error():
    with pytest.raises(ScalingError):
        bl_constant(BLDatum(2, (np.eye(2)[:1], np.eye(2)[1:]), (1.0, 0.5)))


def test_non_surjective_map_is_infinite():
    d = BLDatum(2, ([[1.0, 0.0], [2.0, 0.0]],), (1.0,))
    assert math.isinf(bl_constant(d).value)


def test_datum_validation():
    with pytest.raises(ValueError):
        BLDatum(2, ([[1.0, 0.0]],), (1.0, 1.0))
    with pytest.raises(ValueError):
        BLDatum(3, ([[1.0, 0.0]],), (1.0,))
    with pytest.raises(ValueError):
        BLDatum(2, ([[1.0, 0.0]], [[0.0, 1.0]]), (-1.0, 3.0))


def test_json_roundtrip():
    d = BLDatum.from_json(json.loads((CONFIGS / "lw3.json").read_text()))
    again = BLDatum.from_json(json.loads(json.dumps(d.to_json())))
    assert again.n == 3 and all(np.array_equal(a, b) for a, b in zip(d.maps, again.maps))


# -- ascent and batching ----------------------------------------------------------

def test_fixed_point_trace_ascends():
    start = GaussianInput((np.array([[5.0]]), np.array([[0.1]]), np.array([[2.0]])))
    d = BLDatum.from_maps(([[1.0, 0.0]], [[0.0, 1.0]], [[1.0, -1.0]]), (2 / 3,) * 3)
    t = fixed_point_trace(d, start=start, length=200)
    assert len(t) > 2
    assert np.all(np.diff(t) >= -1e-12)


def test_batch_matches_single_solves(rng):
    maps = [np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])]
    stack = np.stack([np.vstack([maps[0] * a, maps[1] * b])
                      for a, b in rng.uniform(0.5, 2, (20, 2))])
    vals, status = bl_constant_batch(stack, (1, 1), (1.0, 1.0))
    want = [bl_constant(BLDatum(2, (s[:1], s[1:]), (1.0, 1.0))).value for s in stack]
    assert np.allclose(vals, want, rtol=1e-10)
    assert np.all(status == 0)


# -- quotient form and restriction ------------------------------------------------

def test_bl_prime_loomis_whitney():
    W = [Subspace.span([[0.0, 1.0]]), Subspace.span([[1.0, 0.0]])]
    assert bl_prime(W, (1.0, 1.0)).value == pytest.approx(1.0)


def test_bl_prime_equal_kernels_is_infinite():
    W = [Subspace.span([[0.0, 1.0]])] * 2
    assert math.isinf(bl_prime(W, (1.0, 1.0)).value)


@pytest.mark.parametrize("th", [0.3, 0.8, 1.3])
def test_bl_prime_two_lines(th):
    w1, w2 = Subspace.span([[0.0, 1.0]]), Subspace.span([[math.cos(th), math.sin(th)]])
    want = 1.0 / wedge_volume([w1.complement(), w2.complement()])
    assert want == pytest.approx(two_line_bl_prime(w1.complement().basis[0], w2.complement().basis[0]))
    assert bl_prime([w1, w2], (1.0, 1.0)).value == pytest.approx(want, rel=1e-8)


def test_bl_prime_scaling_error():
    with pytest.raises(ScalingError):
        bl_prime([Subspace.span([[0.0, 1.0]])], (1.0,))


def test_restricted_full_space_equals_constant():
    d = skew(0.7)
    assert bl_restricted(d, Subspace.full(2)).value == pytest.approx(bl_constant(d).value, rel=1e-10)


def test_restricted_to_kernel_is_infinite():
    d = BLDatum(2, (np.eye(2),), (1.0,))
    assert math.isinf(bl_restricted(d, kernel([[1.0, 0.0]])).value)


# -- identities -------------------------------------------------------------------

def test_factorization_orthonormal_rows():
    rep = factorization_check(BLDatum(3, (E[[1, 2]], E[[0, 2]], E[[0, 1]]), (0.5, 0.5, 0.5)))
    assert rep["discrepancy"] < 1e-10
    assert rep["r_norms"] == pytest.approx([1.0, 1.0, 1.0])


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_factorization_under_scaling_of_one_map(c):
    base = BLDatum(3, (E[[1, 2]], E[[0, 2]], E[[0, 1]]), (0.5, 0.5, 0.5))
    d = base.with_maps([c * base.maps[0], base.maps[1], base.maps[2]])
    rep = factorization_check(d)
    assert rep["bl"] == pytest.approx(c ** (-0.5 * 2), rel=1e-8)
    assert rep["bl_prime"] == pytest.approx(1.0, rel=1e-8)
    assert rep["r_norms"][0] == pytest.approx(c ** 2)
    assert rep["discrepancy"] < 1e-8


def test_factorization_random_planes_in_r3(rng):
    for _ in range(5):
        maps = tuple(rng.standard_normal((2, 3)) for _ in range(3))
        d = BLDatum(3, maps, (0.5, 0.5, 0.5))
        assert factorization_check(d)["discrepancy"] < 1e-6


def test_factorization_needs_surjective_maps():
    with pytest.raises(ValueError):
        factorization_check(BLDatum(2, ([[1.0, 0.0], [1.0, 0.0]],), (1.0,)))


def test_critical_split_coordinate_cases():
    d = BLDatum(2, ([[1.0, 0.0]], [[0.0, 1.0]]), (1.0, 1.0))
    rep = critical_split_check(d)
    assert rep["bl"] == pytest.approx(1.0) and rep["discrepancy"] < 1e-10
    d2 = BLDatum(2, ([[1.0, 0.0]], [[0.0, 2.0]]), (1.0, 1.0))
    rep2 = critical_split_check(d2)
    assert rep2["bl"] == pytest.approx(0.5) and rep2["rhs"] == pytest.approx(0.5)


def test_critical_split_random_rows(rng):
    for _ in range(5):
        maps = tuple(rng.standard_normal((1, 3)) for _ in range(3))
        d = BLDatum(3, maps, (1.0, 1.0, 1.0))
        assert critical_split_check(d)["discrepancy"] < 1e-6


def test_critical_split_config():
    d = BLDatum.from_json(json.loads((CONFIGS / "split.json").read_text()))
    assert critical_split_check(d)["discrepancy"] < 1e-6


def test_critical_split_requires_unit_last_exponent():
    with pytest.raises(ValueError):
        critical_split_check(BLDatum(2, ([[1.0, 0.0]], [[0.0, 1.0]]), (1.5, 0.5)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_transform_determinant_law(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2)) + 2 * np.eye(2)
    d = skew(0.9)
    lhs = bl_constant(transform_datum(d, A)).value
    assert lhs == pytest.approx(bl_constant(d).value / abs(np.linalg.det(A)), rel=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_solver_value_bounds_every_gaussian(seed):
    rng = np.random.default_rng(seed)
    d = BLDatum(3, (E[[1, 2]] + 0.2, E[[0, 2]], E[[0, 1]] - 0.1), (0.5, 0.5, 0.5))
    A = GaussianInput(tuple(random_spd(2, rng, 1.5) for _ in range(3)))
    assert gaussian_ratio(d, A) <= bl_constant(d).value * (1 + 1e-10)
