"""Independent reference computations used to validate the solvers.

Nothing here shares code with the fixed-point kernel. The diagonal scan
evaluates the Gaussian ratio for diagonal inputs directly, which gives BL
exactly whenever an optimal input can be taken diagonal (rank-one maps, or
coordinate projections composed with diagonal scalings).
"""
from __future__ import annotations

import itertools
import math

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _diag_log_ratio(rows: np.ndarray, row_p: np.ndarray, log_a: np.ndarray) -> np.ndarray:
    """Log Gaussian ratio at diagonal inputs; ``log_a`` has shape (G, R)."""
    # det M = det(S^T S) with S = diag(sqrt(p a)) R; QR of S with rows sorted by
    # weight stays accurate when the a_j span many orders of magnitude
    scaled = np.sqrt(np.exp(log_a) * row_p)[:, :, None] * rows[None, :, :]
    order = np.argsort(-log_a - np.log(row_p), axis=1)
    scaled = np.take_along_axis(scaled, order[:, :, None], axis=1)
    r = np.linalg.qr(scaled, mode="r")
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    with np.errstate(divide="ignore"):
        logdet = 2.0 * np.sum(np.log(diag), axis=1)
    out = 0.5 * (log_a @ row_p - logdet)
    return np.where(np.isfinite(logdet), out, np.inf)


def diagonal_scan(maps, exponents, grid=(-20, 20), grid_step: float = 2.0,
                  max_grid_params: int = 3, sweeps: int = 400, tol: float = 1e-13) -> float:
    """Best diagonal Gaussian ratio by log-grid scan and cyclic golden-section search.

    One input parameter is attached to each row of each map; the first is fixed
    at 1 since the ratio is invariant under common scaling. The objective is
    concave in the log parameters, so cyclic one-dimensional maximisation
    started from the best grid point reaches the global maximum.
    """
    rows = np.vstack([np.atleast_2d(np.asarray(L, dtype=float)) for L in maps])
    row_p = np.concatenate([[p] * np.atleast_2d(L).shape[0] for L, p in zip(maps, exponents)])
    keep = row_p > 0
    rows, row_p = rows[keep], row_p[keep]
    R = rows.shape[0]
    lo, hi = grid[0] * math.log(2), grid[1] * math.log(2)
    free = R - 1

    def f(x):
        return float(_diag_log_ratio(rows, row_p, np.concatenate([[0.0], x])[None, :])[0])

    x = np.zeros(free)
    if 0 < free <= max_grid_params:
        axis = np.arange(grid[0], grid[1] + 1e-9, grid_step) * math.log(2)
        best = -np.inf
        for chunk in _batched(itertools.product(axis, repeat=free), 20000):
            pts = np.array(chunk)
            vals = _diag_log_ratio(rows, row_p, np.hstack([np.zeros((len(pts), 1)), pts]))
            vals = np.where(np.isfinite(vals), vals, -np.inf)
            k = int(np.argmax(vals))
            if vals[k] > best:
                best, x = vals[k], pts[k].copy()
    if math.isinf(f(x)):
        return math.inf

    current = f(x)
    for _ in range(sweeps):
        before = current
        for i in range(free):

            def g(t, i=i):
                y = x.copy()
                y[i] = t
                v = f(y)
                return v if math.isfinite(v) else 1e300

            t = _golden_max(g, lo, hi)
            if g(t) >= current:
                x[i] = t
                current = g(t)
        if current - before < tol:
            break
    return math.exp(current)


def _batched(iterable, n):
    it = iter(iterable)
    while True:
        chunk = list(itertools.islice(it, n))
        if not chunk:
            return
        yield chunk


def _golden_max(g, a: float, b: float, tol: float = 1e-11) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc > gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def two_line_bl_prime(n1, n2) -> float:
    """BL' for two codimension-one kernels in R^2 with p = (1, 1)."""
    n1 = np.asarray(n1, dtype=float) / np.linalg.norm(n1)
    n2 = np.asarray(n2, dtype=float) / np.linalg.norm(n2)
    w = abs(n1[0] * n2[1] - n1[1] * n2[0])
    return math.inf if w == 0 else 1.0 / w


def circle_arc_length(radius: float, center_dist: float, r: float) -> float:
    """Length of the circle |y| = radius inside a ball of radius r centred on it."""
    if center_dist != radius:
        raise ValueError("the ball must be centred on the circle")
    half = 2.0 * math.asin(min(1.0, r / (2.0 * radius)))
    return 2.0 * radius * half


def affine_lattice_count(slope: float, offset: float, x: float, center: float,
                         spacing: float, radius: float, rho: float, tol: float) -> int:
    """Count points z of the grid center + spacing*Z inside [center-2r, center+2r]
    within ``tol`` of the interval slope*[x-rho, x+rho] + offset."""
    lo = slope * (x - rho) + offset
    hi = slope * (x + rho) + offset
    lo, hi = min(lo, hi) - tol, max(lo, hi) + tol
    k_lo = math.ceil((max(lo, center - 2 * radius) - center) / spacing - 1e-12)
    k_hi = math.floor((min(hi, center + 2 * radius) - center) / spacing + 1e-12)
    return max(0, k_hi - k_lo + 1)
