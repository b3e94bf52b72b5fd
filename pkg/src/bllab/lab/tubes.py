"""Tube counts through fine meshes and the pointwise estimate they feed."""
from __future__ import annotations

import math

import numpy as np

from ..linalg import r_norm
from .mesh import Mesh

N_STARTS = 20
MEMBER_RTOL = 1e-3


def sample_ball(rng: np.random.Generator, center, radius: float, k: int) -> np.ndarray:
    """k uniform points of the closed ball."""
    c = np.asarray(center, dtype=float)
    d = c.size
    v = rng.standard_normal((k, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return c + radius * v * rng.random((k, 1)) ** (1.0 / d)


def _project(y, center, radius):
    off = y - center
    nrm = np.linalg.norm(off, axis=-1, keepdims=True)
    return center + off * np.minimum(1.0, radius / np.maximum(nrm, 1e-300))


def min_residual(B, center, radius: float, targets, seed: int = 0,
                 starts: int = N_STARTS, iters: int = 400, stop: float = 0.0) -> np.ndarray:
    """min over y in the closed ball U_radius(center) of |B(y) - z| for each target z.

    Seeded multistart projected gradient on 0.5|B(y) - z|^2 with backtracking;
    one start is the centre itself. Targets already below ``stop`` are retired.
    """
    center = np.asarray(center, dtype=float)
    z = np.atleast_2d(np.asarray(targets, dtype=float))
    Z, n = len(z), center.size
    rng = np.random.default_rng(seed)
    y0 = np.vstack([center[None, :], sample_ball(rng, center, radius, starts - 1)])
    y = np.broadcast_to(y0, (Z, starts, n)).copy().reshape(-1, n)
    zz = np.repeat(z, starts, axis=0)
    r = B.evaluate(y) - zz
    f = 0.5 * np.sum(r * r, axis=1)
    J = B.jacobian_at(y)
    lip = np.maximum(np.linalg.norm(J, ord=2, axis=(1, 2)) ** 2, 1e-12)
    t = 1.0 / lip
    active = np.ones(len(y), dtype=bool)
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = np.einsum("kij,ki->kj", B.jacobian_at(y[idx]), r[idx])
        step = t[idx] * 2.0
        accepted = np.zeros(idx.size, dtype=bool)
        y_new, r_new, f_new = y[idx].copy(), r[idx].copy(), f[idx].copy()
        for _ in range(40):
            todo = ~accepted
            if not np.any(todo):
                break
            y_cur = y[idx][todo]
            cand = _project(y_cur - step[todo, None] * g[todo], center, radius)
            rc = B.evaluate(cand) - zz[idx][todo]
            fc = 0.5 * np.sum(rc * rc, axis=1)
            # sufficient decrease for the projected step
            ok = fc <= f[idx][todo] - 1e-4 * np.sum((cand - y_cur) ** 2, axis=1) / step[todo]
            pos = np.flatnonzero(todo)[ok]
            y_new[pos], r_new[pos], f_new[pos] = cand[ok], rc[ok], fc[ok]
            accepted[pos] = True
            step[np.flatnonzero(todo)[~ok]] *= 0.5
        moved = np.linalg.norm(y_new - y[idx], axis=1)
        gain = f[idx] - f_new
        y[idx], r[idx], f[idx], t[idx] = y_new, r_new, f_new, step
        done = (~accepted) | (moved < 1e-15 * (1 + radius)) | (gain <= 1e-30) \
            | (np.sqrt(2 * f_new) <= stop)
        active[idx[done]] = False
    best = np.sqrt(2 * f).reshape(Z, starts).min(axis=1)
    return best


def tube_count(B, mesh: Mesh, x, delta: float, beta: float = 1.25, seed: int = 0) -> int:
    """#{z in mesh : z in B(U_{delta^beta}(x))}, membership certified when the
    minimised residual is at most 1e-3 * delta^beta."""
    rho = delta ** beta
    x = np.asarray(x, dtype=float)
    if not (1 < beta):
        raise ValueError("beta must exceed 1")
    tol = MEMBER_RTOL * rho
    # conservative prefilter: |B(y) - B(x)| <= rho * sup |dB| on the ball
    probe = np.vstack([x[None, :], sample_ball(np.random.default_rng(seed), x, rho, 64)])
    lip = np.max(np.linalg.norm(B.jacobian_at(probe), ord=2, axis=(1, 2)))
    reach = 2.0 * lip * rho + tol
    bx = B.evaluate(x)
    cand = mesh.points[np.linalg.norm(mesh.points - bx, axis=1) <= reach]
    if len(cand) == 0:
        return 0
    res = min_residual(B, x, rho, cand, seed=seed, stop=0.1 * tol)
    return int(np.sum(res <= tol))


def ptws_check(B, V_center, V_radius: float, x, delta: float, alpha: float = 1.5,
               beta: float = 1.25, C: float = 2.0, seed: int = 0) -> dict:
    """|R(x)| chi_V(B(x)) against delta^{(alpha-beta) n_j} * tube_count."""
    from .mesh import build_mesh
    if not (1 < beta < alpha):
        raise ValueError("need 1 < beta < alpha")
    x = np.asarray(x, dtype=float)
    c = np.atleast_1d(np.asarray(V_center, dtype=float))
    nj = c.size
    J = B.jacobian_at(x)
    R = r_norm(J)
    inside = np.linalg.norm(B.evaluate(x) - c) <= V_radius
    lhs = R * float(inside)
    mesh = build_mesh(c, delta, alpha)
    count = tube_count(B, mesh, x, delta, beta, seed) if lhs > 0 else 0
    rhs = delta ** ((alpha - beta) * nj) * count
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "count": count, "ratio": ratio, "C": C,
            "ok": bool(lhs <= C * rhs or lhs == 0)}


def linearise_check(B, x, delta: float, samples: int = 500, seed: int = 0,
                    surjectivity_tol: float = 1e-8) -> dict:
    """Count points of the affine image L^x(U_{delta/2}(x)) not certified to lie in B(U_delta(x))."""
    x = np.asarray(x, dtype=float)
    J = B.jacobian_at(x)
    s = np.linalg.svd(J, compute_uv=False)
    if s[0] == 0 or s[-1] <= surjectivity_tol * s[0]:
        return {"skipped": True, "failures": 0, "delta": delta}
    rng = np.random.default_rng(seed)
    v = sample_ball(rng, x, delta / 2, samples)
    targets = B.evaluate(x) + (v - x) @ J.T
    tol = MEMBER_RTOL * delta
    res = min_residual(B, x, delta, targets, seed=seed, stop=0.1 * tol)
    return {"skipped": False, "failures": int(np.sum(res > tol)), "delta": delta}


def linearise_threshold(B, x, delta_hi: float = 1.0, delta_lo: float = 1e-4,
                        steps: int = 12, samples: int = 200, seed: int = 0) -> float:
    """Largest delta (by bisection in log scale) with zero linearisation failures."""
    if linearise_check(B, x, delta_hi, samples, seed)["failures"] == 0:
        return delta_hi
    lo, hi = math.log(delta_lo), math.log(delta_hi)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if linearise_check(B, x, math.exp(mid), samples, seed)["failures"] == 0:
            lo = mid
        else:
            hi = mid
    return math.exp(lo)
