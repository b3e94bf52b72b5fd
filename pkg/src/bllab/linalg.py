"""Dense linear algebra on small matrices: kernels, subspaces, wedge volumes.

Matrices are plain ``numpy`` float64 arrays of shape ``(rows, cols)``.
Subspaces carry an orthonormal basis stored row-wise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

#: relative singular-value cutoff used for every rank decision in the package
RANK_RTOL = 1e-10
ORTHO_TOL = 1e-10
ANGLE_TOL = 1e-8


def as_matrix(entries) -> np.ndarray:
    """Coerce nested sequences to a finite 2-D float array."""
    a = np.array(entries, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def matrix_to_json(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(a)]


def rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def orthonormalize(vectors, rtol: float = RANK_RTOL) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Vectors whose residual norm falls below ``rtol`` times the largest input
    norm are treated as dependent and dropped.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    if v.size == 0:
        return v.reshape(0, v.shape[-1] if v.ndim == 2 else 0)
    scale = max(np.max(np.linalg.norm(v, axis=1)), np.finfo(float).tiny)
    basis: list[np.ndarray] = []
    for row in v:
        w = row.copy()
        for _ in range(2):
            for q in basis:
                w -= (q @ w) * q
        nrm = np.linalg.norm(w)
        if nrm > rtol * scale:
            basis.append(w / nrm)
    if not basis:
        return np.zeros((0, v.shape[1]))
    return np.array(basis)


@dataclass(frozen=True)
class Subspace:
    ambient_dim: int
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float).reshape(-1, self.ambient_dim)
        if b.shape[0] > self.ambient_dim:
            raise ValueError("more basis vectors than ambient dimension")
        if b.shape[0] and np.max(np.abs(b @ b.T - np.eye(b.shape[0]))) > ORTHO_TOL:
            raise ValueError("basis is not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def span(cls, vectors, ambient_dim: int | None = None) -> "Subspace":
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        n = ambient_dim if ambient_dim is not None else v.shape[1]
        if v.size == 0:
            return cls(n, np.zeros((0, n)))
        return cls(n, orthonormalize(v))

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, np.eye(n))

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, np.zeros((0, n)))

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace.full(self.ambient_dim)
        return kernel(self.basis)

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.projector() @ v) <= tol * max(1.0, np.linalg.norm(v)))

    def equals(self, other: "Subspace", tol: float = ANGLE_TOL) -> bool:
        """Equality by principal angles rather than basis comparison."""
        if self.ambient_dim != other.ambient_dim or self.dim != other.dim:
            return False
        if self.dim == 0:
            return True
        return bool(np.max(subspace_angles(self.basis.T, other.basis.T)) < tol)


def kernel(L) -> Subspace:
    """Orthonormal basis of the null space of ``L``."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = L.shape[1]
    _, s, vt = np.linalg.svd(L)
    if s.size == 0 or s[0] == 0.0:
        return Subspace.full(n)
    r = int(np.sum(s > RANK_RTOL * s[0]))
    return Subspace(n, orthonormalize(vt[r:]))


def row_space(L) -> Subspace:
    return kernel(L).complement()


def wedge_volume(subspaces) -> float:
    """Volume of the parallelepiped spanned by the union of orthonormal bases."""
    subspaces = list(subspaces)
    if not subspaces:
        return 1.0
    n = subspaces[0].ambient_dim
    if any(s.ambient_dim != n for s in subspaces):
        raise ValueError("subspaces live in different ambient spaces")
    if sum(s.dim for s in subspaces) > n:
        raise ValueError("wedge overdetermined")
    b = np.vstack([s.basis for s in subspaces])
    if b.shape[0] == 0:
        return 1.0
    # singular values avoid the cancellation of det(B B^T) for nearly dependent sets
    sv = np.linalg.svd(b, compute_uv=False)
    return float(np.prod(sv))


def r_norm(L) -> float:
    """det(L L^T)^(1/2), the volume of the wedge of the rows of L."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[0] > L.shape[1]:
        raise ValueError("r_norm needs rows <= cols")
    return float(np.prod(np.linalg.svd(L, compute_uv=False)))


def restrict(L, V: Subspace) -> np.ndarray:
    """Matrix of L acting on V in the stored orthonormal basis of V."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if V.ambient_dim != L.shape[1]:
        raise ValueError("subspace ambient dimension does not match map domain")
    return L @ V.basis.T


def orthonormal_rows_with_kernel(W: Subspace) -> np.ndarray:
    """A map whose rows are an orthonormal basis of W^perp, so ker = W."""
    return W.complement().basis.copy()


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
