"""Discrete Zorin-Kranich functional for families of parallel affine flats,
and the end-to-end discretisation chain for affine data."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..integrate import IntegrationSpec, integrate_box, unit_ball_volume
from ..linalg import Subspace, orthonormal_rows_with_kernel, r_norm
from ..solver import SCALING_TOL, ScalingError, SolverOptions, bl_constant, bl_prime
from .mesh import ALPHA, BETA, collection_meshes, merge_meshes


@dataclass(frozen=True)
class AffineFamily:
    """Parallel flats a + W for a common direction space W and base points a."""
    direction: Subspace
    offsets: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.offsets, dtype=float).reshape(-1, self.direction.ambient_dim)
        object.__setattr__(self, "offsets", a)

    @property
    def k(self) -> int:
        return self.direction.dim

    @property
    def n(self) -> int:
        return self.direction.ambient_dim

    def __len__(self) -> int:
        return len(self.offsets)

    def measure_in_ball(self, x: np.ndarray, radius: float) -> np.ndarray:
        """|H ∩ U_radius(x)| (k-dimensional measure, summed over flats) at each x."""
        x = np.atleast_2d(x)
        N = orthonormal_rows_with_kernel(self.direction)      # rows span W^perp
        if N.shape[0] == 0:
            d2 = np.zeros((len(x), len(self.offsets)))
        else:
            d2 = np.sum(((x[:, None, :] - self.offsets[None, :, :]) @ N.T) ** 2, axis=-1)
        h2 = np.clip(radius ** 2 - d2, 0.0, None)
        return unit_ball_volume(self.k) * np.sum(h2 ** (self.k / 2) * (d2 <= radius ** 2), axis=1)


def _check_exponents(families, p):
    n = families[0].n
    P = sum(p)
    if P < 1 - SCALING_TOL:
        raise ValueError("need P = sum p_j >= 1")
    total = sum(pj * (n - F.k) for pj, F in zip(p, families))
    if abs(total - n) > SCALING_TOL:
        raise ScalingError(f"sum p_j (n - k_j) = {total} differs from n = {n}")
    return P


def zk_functional(families, p, spec: IntegrationSpec, opts: SolverOptions | None = None,
                  degrees=None) -> dict:
    """int BL'(W, p)^{-1} prod_j |H_j ∩ U_1(x)|^{p_j} dx over the window centres in
    the spec's box, against prod_j (deg_j #H_j)^{p_j}."""
    families = list(families)
    p = [float(x) for x in p]
    _check_exponents(families, p)
    blp = bl_prime([F.direction for F in families], p, opts).value
    weight = 0.0 if math.isinf(blp) else 1.0 / blp
    degrees = degrees or [1] * len(families)

    def fn(x):
        out = np.full(len(x), weight)
        if weight == 0:
            return out
        for F, pj in zip(families, p):
            out *= F.measure_in_ball(x, 1.0) ** pj
        return out

    est = integrate_box(fn, spec) if weight else None
    lhs = est.value if est else 0.0
    rhs = math.prod((d * len(F)) ** pj for d, F, pj in zip(degrees, families, p))
    return {"lhs": lhs, "error": est.error if est else 0.0, "rhs": rhs,
            "ratio": lhs / rhs if rhs else math.inf, "bl_prime": blp}


def chain_check(maps, offsets, exponents, collections, delta: float, spec: IntegrationSpec,
                alpha: float = ALPHA, beta: float = BETA, C: float = 4.0,
                opts: SolverOptions | None = None) -> dict:
    """Affine data B_j(x) = L_j x + b_j: compare

        int prod_j (sum_V chi_V(B_j x))^{p_j} BL(L, p)^{-1} dx
    with
        delta^{(alpha - beta P) n} int BL'(ker L, p)^{-1} prod_j |H_j ∩ U_{2 delta^beta}(x)|^{p_j} dx,

    where H_j is the union of the fibers of B_j over all mesh points.
    """
    maps = [np.atleast_2d(np.asarray(L, dtype=float)) for L in maps]
    offsets = [np.atleast_1d(np.asarray(b, dtype=float)) for b in offsets]
    p = [float(x) for x in exponents]
    n = maps[0].shape[1]
    if abs(sum(pj * L.shape[0] for pj, L in zip(p, maps)) - n) > SCALING_TOL:
        raise ScalingError("scaling condition violated")
    P = sum(p)
    from ..solver import BLDatum
    bl = bl_constant(BLDatum(n, tuple(maps), tuple(p)), opts).value
    kernels = []
    families = []
    for L, b, C_j in zip(maps, offsets, collections):
        W = Subspace.span(np.linalg.svd(L)[2][L.shape[0]:], n) if L.shape[0] < n else Subspace.zero(n)
        kernels.append(W)
        pts = merge_meshes(collection_meshes(C_j, alpha))
        # one point on each fiber {L x + b = z}: minimum-norm solution
        base = np.linalg.lstsq(L, (pts - b).T, rcond=None)[0].T
        families.append(AffineFamily(W, base))
    blp = bl_prime(kernels, p, opts).value
    rho = delta ** beta

    def lhs_fn(x):
        out = np.full(len(x), 1.0 / bl)
        for L, b, C_j, pj in zip(maps, offsets, collections, p):
            z = x @ L.T + b
            d2 = np.sum((z[:, None, :] - C_j.centers[None, :, :]) ** 2, axis=-1)
            out *= np.sum(d2 <= C_j.delta ** 2, axis=1).astype(float) ** pj
        return out

    def rhs_fn(x):
        out = np.full(len(x), 1.0 / blp)
        for F, pj in zip(families, p):
            out *= F.measure_in_ball(x, 2 * rho) ** pj
        return out

    lhs = integrate_box(lhs_fn, spec)
    rhs_int = integrate_box(rhs_fn, spec)
    factor = delta ** ((alpha - beta * P) * n)
    rhs = factor * rhs_int.value
    norms = [r_norm(L) for L in maps]
    return {"lhs": lhs.value, "lhs_err": lhs.error, "rhs": rhs, "rhs_err": factor * rhs_int.error,
            "ratio": lhs.value / rhs if rhs > 0 else math.inf, "C": C,
            "bl": bl, "bl_prime": blp, "r_norms": norms,
            "ok": bool(lhs.value <= C * rhs)}
