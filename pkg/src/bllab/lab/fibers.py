"""Fiber measures through normalised delta-probes, and the volume lower bound."""
from __future__ import annotations

import math

import numpy as np

from ..integrate import unit_ball_volume
from ..linalg import random_orthogonal
from .tubes import MEMBER_RTOL, min_residual

LADDER = (8, 16, 32)
CELLS_PER_PROBE = 24
MAX_NODES = 4_000_000


def _rotated_nodes(center: np.ndarray, r: float, h: float, seed: int = 0):
    """Midpoint nodes of a grid of spacing h covering U_r(center), rotated by a
    fixed generic rotation so no grid line aligns with a coordinate fiber."""
    n = center.size
    if n == 2:
        th = math.sqrt(2.0) - 1.0  # irrational angle in radians
        Q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    else:
        Q = random_orthogonal(n, np.random.default_rng(seed))
    K = int(math.ceil(r / h))
    ax = (np.arange(-K, K) + 0.5) * h
    g = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    g = g[np.sum(g * g, axis=1) <= r * r]
    return center + g @ Q.T, h ** n


def probe_integral(B, z, x, r: float, delta: float, seed: int = 0) -> float:
    """int det(dB dB^T)^{1/2} 1_{U_r(x)} chi_delta(B(y) - z) dy with the unit-mass
    normalised indicator chi_delta of the delta-ball in the target."""
    x = np.asarray(x, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    nj = z.size
    h = delta / CELLS_PER_PROBE
    if (2 * r / h) ** x.size > MAX_NODES:
        h = 2 * r / MAX_NODES ** (1.0 / x.size)
    y, cell = _rotated_nodes(x, r, h, seed)
    total = 0.0
    for lo in range(0, len(y), 500_000):
        blk = y[lo:lo + 500_000]
        hit = np.sum((B.evaluate(blk) - z) ** 2, axis=1) <= delta * delta
        if not np.any(hit):
            continue
        J = B.jacobian_at(blk[hit])
        jac = np.sqrt(np.abs(np.linalg.det(J @ np.swapaxes(J, 1, 2))))
        total += math.fsum(jac)
    return total * cell / (unit_ball_volume(nj) * delta ** nj)


def fiber_measure(B, z, x, r: float, seed: int = 0, ladder=LADDER) -> float:
    """sigma(B^{-1}(z) ∩ U_r(x)) as the Richardson limit of delta-probe integrals
    over delta = r/8, r/16, r/32 (error O(delta^2))."""
    vals = [probe_integral(B, z, x, r, r / k, seed) for k in ladder]
    for a, b in zip(vals, vals[1:]):
        scale = max(abs(a), abs(b))
        if scale > 0 and abs(a - b) / scale > 0.10:
            raise ValueError("probe too coarse")
    ratio = ladder[-1] / ladder[-2]
    w = ratio ** 2
    return float(max(0.0, (w * vals[-1] - vals[-2]) / (w - 1)))


def volumebound_check(B, z, x, delta: float, beta: float = 1.25, C: float = 1.0,
                      seed: int = 0) -> dict:
    """delta^{beta(n-n_j)} 1[dist(x, fiber) <= delta^beta] against the fiber
    measure in U_{2 delta^beta}(x)."""
    x = np.asarray(x, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    rho = delta ** beta
    res = min_residual(B, x, rho, z[None, :], seed=seed)[0]
    near = res <= MEMBER_RTOL * rho
    lhs = rho ** (x.size - z.size) if near else 0.0
    rhs = float(fiber_measure(B, z, x, 2 * rho, seed)) if near else 0.0
    return {"lhs": lhs, "rhs": rhs, "near": bool(near), "C": C,
            "ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf),
            "ok": bool(lhs <= C * rhs or lhs == 0)}
