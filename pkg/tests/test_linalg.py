import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bllab.linalg import (Subspace, as_matrix, kernel, orthonormalize, r_norm, rank, restrict,
                          row_space, wedge_volume)

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def test_kernel_of_coordinate_projection():
    K = kernel([[1, 0]])
    assert K.equals(Subspace.span([E2]))


def test_kernel_of_identity_is_zero():
    assert kernel(np.eye(2)).dim == 0


def test_kernel_of_diagonal_row():
    K = kernel([[1, 1]])
    assert K.dim == 1
    assert K.contains(np.array([1, -1]) / math.sqrt(2))


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        as_matrix([[1, np.nan]])
    with pytest.raises(ValueError):
        as_matrix([[[1.0]]])
    assert as_matrix([1, 2]).shape == (1, 2)


def test_orthonormalize_drops_dependent_vectors():
    b = orthonormalize([[1, 0, 0], [2, 0, 0], [0, 1, 0]])
    assert b.shape == (2, 3)
    assert np.allclose(b @ b.T, np.eye(2))


def test_subspace_rejects_non_orthonormal_basis():
    with pytest.raises(ValueError):
        Subspace(2, np.array([[1.0, 1.0]]))


def test_wedge_volume_cases():
    assert wedge_volume([Subspace.span([E1]), Subspace.span([E2])]) == pytest.approx(1.0)
    th = 0.7
    v = wedge_volume([Subspace.span([E1]), Subspace.span([[math.cos(th), math.sin(th)]])])
    assert v == pytest.approx(abs(math.sin(th)), abs=1e-14)
    assert wedge_volume([Subspace.span([E1]), Subspace.span([E1])]) == pytest.approx(0.0, abs=1e-14)


def test_wedge_volume_overdetermined():
    with pytest.raises(ValueError):
        wedge_volume([Subspace.full(2), Subspace.span([E1])])


def test_r_norm_cases():
    assert r_norm(np.eye(2)) == pytest.approx(1.0)
    assert r_norm([[2, 0], [0, 3]]) == pytest.approx(6.0)
    assert r_norm([[1, 1]]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        r_norm(np.ones((3, 2)))


def test_restrict_cases():
    assert np.allclose(restrict(np.eye(2), Subspace.span([E1])), [[1], [0]])
    assert np.allclose(restrict([[0, 1]], Subspace.span([E1])), [[0]])
    V = kernel([[1, 1]])
    assert np.allclose(restrict([[1, 1]], V), 0.0)


def test_row_space_complements_kernel():
    L = np.array([[1.0, 2.0, 0.0]])
    R, K = row_space(L), kernel(L)
    assert R.dim + K.dim == 3
    assert np.allclose(R.basis @ K.basis.T, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_rank_nullity(k, n, seed):
    L = np.random.default_rng(seed).standard_normal((min(k, n), n))
    K = kernel(L)
    assert K.dim + rank(L) == n
    assert np.allclose(L @ K.basis.T, 0.0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_r_norm_is_wedge_of_rows(k, seed):
    # |L| equals the volume of the parallelepiped on the rows of L
    L = np.random.default_rng(seed).standard_normal((k, 4))
    assert r_norm(L) == pytest.approx(math.sqrt(np.linalg.det(L @ L.T)), rel=1e-10)
