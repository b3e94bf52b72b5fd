"""Upper bounds for the Fremlin tensor norm of sampled nonnegative functions.

For T >= 0 on a product of weighted sample sets, the norm is the infimum of
prod_j ||F_j||_{q_j} over factors with T <= F_1 ⊗ ... ⊗ F_m pointwise. Every
returned bound comes from an explicitly feasible family of factors.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

ITERATIONS = 200
STALL = 1e-10


@dataclass(frozen=True)
class Axis:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        pts = np.asarray(self.points, dtype=float)
        pts = pts.reshape(len(w), -1)
        if np.any(w <= 0):
            raise ValueError("sample weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def scaled(self, eps: float) -> "Axis":
        """Dilate the sample set by eps; weights carry the Jacobian eps^dim."""
        return Axis(eps * self.points, eps ** self.dim * self.weights)


@dataclass(frozen=True)
class GridTensor:
    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        axes = tuple(self.axes)
        if v.shape != tuple(len(a.weights) for a in axes):
            raise ValueError("tensor shape does not match axis sizes")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("tensor values must be finite and nonnegative")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return len(self.axes)

    def rescaled(self, eps: float) -> "GridTensor":
        return GridTensor(tuple(a.scaled(eps) for a in self.axes), self.values)


@dataclass
class FremlinBound:
    value: float
    factors: list = field(repr=False)
    iterations: int = 0
    method: str = "alternating"


def _norm(F, w, q) -> float:
    return float(np.sum(w * F ** q) ** (1.0 / q))


def _expand(F, j, m):
    shape = [1] * m
    shape[j] = -1
    return F.reshape(shape)


def _closure(T: np.ndarray, F: list, j: int) -> np.ndarray:
    """Smallest F_j dominating T given the other factors."""
    m = T.ndim
    others = np.ones_like(T)
    for i in range(m):
        if i != j:
            others = others * _expand(F[i], i, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(T > 0, T / others, 0.0)
    axes = tuple(i for i in range(m) if i != j)
    return ratio.max(axis=axes) if axes else ratio


def _balance(F, ws, q):
    norms = [_norm(f, w, qq) for f, w, qq in zip(F, ws, q)]
    if any(n == 0 for n in norms):
        return F
    g = math.exp(sum(math.log(n) for n in norms) / len(norms))
    return [f * (g / n) for f, n in zip(F, norms)]


def _product(F, ws, q) -> float:
    return math.prod(_norm(f, w, qq) for f, w, qq in zip(F, ws, q))


def _alternating(T: np.ndarray, ws, q, iterations: int, stall: float):
    m = T.ndim
    F = [np.full(T.shape[j], T.max() ** (1.0 / m)) for j in range(m)]
    best = _product(F, ws, q)
    it = 0
    for it in range(1, iterations + 1):
        for j in range(m):
            F[j] = _closure(T, F, j)
        F = _balance(F, ws, q)
        val = _product(F, ws, q)
        done = best - val <= stall * max(best, 1e-300)
        best = min(best, val)
        if done:
            break
    return F, _product(F, ws, q), it


def _convex_refine(T: np.ndarray, ws, q):
    """Minimise sum_j log ||exp(u_j)||_{q_j} subject to sum_j u_j(i_j) >= log T(i)
    over the support of T. Weights are normalised to unit mass so that the
    solved problem does not depend on the overall scale of each axis; the log
    weights are rounded so that rescaled axes give a bitwise identical problem."""
    import cvxpy as cp

    m = T.ndim
    idx = np.argwhere(T > 0)
    live = [np.unique(idx[:, j]) for j in range(m)]
    pos = [np.full(T.shape[j], -1) for j in range(m)]
    for j in range(m):
        pos[j][live[j]] = np.arange(len(live[j]))
    u = [cp.Variable(len(live[j])) for j in range(m)]
    logT = np.log(T[tuple(idx.T)])
    lhs = sum(u[j][pos[j][idx[:, j]]] for j in range(m))
    objective = 0
    for j in range(m):
        logw = np.round(np.log(ws[j][live[j]] / ws[j].sum()), 9)
        objective = objective + cp.log_sum_exp(q[j] * u[j] + logw) / q[j]
    prob = cp.Problem(cp.Minimize(objective), [lhs >= logT])
    try:
        # an inaccurate flag is harmless: feasibility is restored below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10,
                       tol_ktratio=1e-8, max_iter=500)
    except (cp.error.SolverError, ValueError):
        return None
    if u[0].value is None:
        return None
    F = []
    for j in range(m):
        f = np.zeros(T.shape[j])
        f[live[j]] = np.exp(u[j].value)
        F.append(f)
    # restore exact feasibility through the last factor
    F[-1] = _closure(T, F, m - 1)
    return F


def fremlin_decomposition(T: GridTensor, q, iterations: int = ITERATIONS, stall: float = STALL,
                          refine: bool = True) -> FremlinBound:
    q = [float(x) for x in q]
    if len(q) != T.m or any(x < 1 for x in q):
        raise ValueError("need one exponent q_j >= 1 per axis")
    V = T.values
    ws = [a.weights for a in T.axes]
    if not np.any(V > 0):
        return FremlinBound(0.0, [np.zeros(V.shape[j]) for j in range(T.m)], 0, "zero")
    F, val, it = _alternating(V, ws, q, iterations, stall)
    out = FremlinBound(val, F, it, "alternating")
    if refine and T.m > 1:
        G = _convex_refine(V, ws, q)
        if G is not None:
            gval = _product(G, ws, q)
            if gval < val:
                out = FremlinBound(gval, G, it, "convex")
    return out


def fremlin_upper(T: GridTensor, q, **kw) -> float:
    """Upper bound on the Fremlin norm of T with exponents q_j >= 1."""
    return fremlin_decomposition(T, q, **kw).value


def dominates(T: GridTensor, factors, rtol: float = 1e-12) -> bool:
    m = T.m
    prod = np.ones_like(T.values)
    for j, f in enumerate(factors):
        prod = prod * _expand(np.asarray(f), j, m)
    return bool(np.all(T.values <= prod * (1 + rtol)))
