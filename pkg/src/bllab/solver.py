"""Brascamp-Lieb constants by optimisation over centred Gaussian inputs.

BL(L, p) is the supremum over positive-definite A_j of

    ( prod_j det(A_j)^{p_j} / det(sum_j p_j L_j^T A_j L_j) )^{1/2},

which the batched kernel maximises with a damped fixed-point iteration.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .linalg import (
    ANGLE_TOL,
    RANK_RTOL,
    Subspace,
    as_matrix,
    kernel,
    matrix_to_json,
    orthonormal_rows_with_kernel,
    r_norm,
    rank,
    restrict,
)

SCALING_TOL = 1e-9


class ScalingError(ValueError):
    """The exponents do not satisfy sum_j p_j n_j = n."""


@dataclass(frozen=True)
class BLDatum:
    n: int
    maps: tuple
    exponents: tuple

    def __post_init__(self):
        maps = tuple(as_matrix(L) for L in self.maps)
        if len(maps) != len(self.exponents):
            raise ValueError("one exponent per map is required")
        for L in maps:
            if L.shape[1] != self.n:
                raise ValueError(f"map with {L.shape[1]} columns on ambient dimension {self.n}")
            L.setflags(write=False)
        p = tuple(float(x) for x in self.exponents)
        if any(x < 0 or not math.isfinite(x) for x in p):
            raise ValueError("exponents must be finite and nonnegative")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "exponents", p)

    @classmethod
    def from_maps(cls, maps, exponents) -> "BLDatum":
        maps = [as_matrix(L) for L in maps]
        return cls(maps[0].shape[1], tuple(maps), tuple(exponents))

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def dims(self) -> tuple:
        return tuple(L.shape[0] for L in self.maps)

    @property
    def scaling_defect(self) -> float:
        return abs(sum(p * k for p, k in zip(self.exponents, self.dims)) - self.n)

    @property
    def degenerate(self) -> bool:
        return any(rank(L) < L.shape[0] for L in self.maps)

    def with_maps(self, maps) -> "BLDatum":
        maps = [as_matrix(L) for L in maps]
        return BLDatum(maps[0].shape[1], tuple(maps), self.exponents)

    def active(self) -> "BLDatum":
        """Drop maps whose exponent is zero; their factor is identically one."""
        keep = [j for j, p in enumerate(self.exponents) if p > 0]
        return BLDatum(self.n, tuple(self.maps[j] for j in keep),
                       tuple(self.exponents[j] for j in keep))

    def to_json(self) -> dict:
        return {"n": self.n, "maps": [matrix_to_json(L) for L in self.maps],
                "exponents": list(self.exponents)}

    @classmethod
    def from_json(cls, obj: dict) -> "BLDatum":
        maps = [as_matrix(L) for L in obj["maps"]]
        n = int(obj.get("n", maps[0].shape[1]))
        return cls(n, tuple(maps), tuple(obj["exponents"]))


@dataclass(frozen=True)
class GaussianInput:
    blocks: tuple

    def __post_init__(self):
        blocks = []
        for A in self.blocks:
            A = as_matrix(A)
            if A.shape[0] != A.shape[1]:
                raise ValueError("Gaussian input blocks must be square")
            if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
                raise ValueError("Gaussian input blocks must be symmetric")
            if np.linalg.eigvalsh(A)[0] <= 0:
                raise ValueError("Gaussian input blocks must be positive definite")
            blocks.append(A)
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def identity(cls, dims) -> "GaussianInput":
        return cls(tuple(np.eye(k) for k in dims))

    def scaled(self, c: float) -> "GaussianInput":
        return GaussianInput(tuple(c * A for A in self.blocks))


@dataclass
class SolverOptions:
    max_iter: int = 10000
    tol: float = 1e-12
    damping: float = 0.5
    diverge_log: float = 50.0
    restarts: int = 8
    seed: int = 0
    prescreen: bool = True
    prescreen_random: int = 200
    polish: bool = True


@dataclass
class BLResult:
    value: float
    status: str
    witness: GaussianInput | None
    iterations: int
    restart_values: list = field(default_factory=list)
    prescreen_subspace: Subspace | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    @property
    def restart_spread(self) -> float:
        """Relative spread of the fixed-point values over the identity start and restarts."""
        vals = [v for v in self.restart_values if math.isfinite(v)]
        if len(vals) < 2 or not self.finite:
            return 0.0
        return (max(vals) - min(vals)) / max(vals)

    def to_json(self) -> dict:
        return {"value": self.value if self.finite else "inf", "status": self.status,
                "iterations": self.iterations, "restart_spread": self.restart_spread}


def _infinite(status_reason: str = "diverged-to-infinity", subspace=None) -> BLResult:
    return BLResult(math.inf, "diverged-to-infinity", None, 0, [], subspace)


def _assemble_M(datum: BLDatum, A: GaussianInput) -> np.ndarray:
    M = np.zeros((datum.n, datum.n))
    for L, Aj, p in zip(datum.maps, A.blocks, datum.exponents):
        M += p * (L.T @ Aj @ L)
    return M


def gaussian_ratio(datum: BLDatum, A: GaussianInput) -> float:
    """The Gaussian lower bound for BL at input A; +inf on a degenerate M(A)."""
    if len(A.blocks) != datum.m:
        raise ValueError("one Gaussian block per map is required")
    for L, Aj in zip(datum.maps, A.blocks):
        if Aj.shape[0] != L.shape[0]:
            raise ValueError("Gaussian block size does not match map target dimension")
    M = _assemble_M(datum, A)
    w = np.linalg.eigvalsh(M)
    if w[-1] <= 0 or w[0] <= 1e-13 * w[-1]:
        return math.inf
    log_num = sum(p * np.linalg.slogdet(Aj)[1] for p, Aj in zip(datum.exponents, A.blocks))
    return math.exp(0.5 * (log_num - np.sum(np.log(w))))


def random_spd(k: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    q = q * np.sign(np.diag(r))
    return (q * np.exp(spread * rng.standard_normal(k))) @ q.T


def _stack(datum: BLDatum):
    offsets = np.concatenate([[0], np.cumsum(datum.dims)]).astype(int)
    return np.vstack(datum.maps), offsets


def run_fixed_point(datum: BLDatum, starts, opts: SolverOptions, trace_len: int = 0):
    """Run the kernel from several starting inputs of one datum."""
    L, offsets = _stack(datum)
    N = len(starts)
    Lb = np.broadcast_to(L, (N,) + L.shape).copy()
    A0 = [np.stack([s.blocks[j] for s in starts]) for j in range(datum.m)]
    return kernels.solve_batch(Lb, offsets, np.asarray(datum.exponents), A0,
                               max_iter=opts.max_iter, tol=opts.tol,
                               diverge_log=opts.diverge_log, step=1.0 - opts.damping,
                               trace_len=trace_len)


def fixed_point_trace(datum: BLDatum, opts: SolverOptions | None = None,
                      start: GaussianInput | None = None, length: int = 500) -> np.ndarray:
    """Log Gaussian ratio along the iteration, for ascent diagnostics."""
    opts = opts or SolverOptions()
    datum = datum.active()
    start = start or GaussianInput.identity(datum.dims)
    lr, status, iters, _, trace = run_fixed_point(datum, [start], opts, trace_len=length)
    t = trace[0]
    return t[: min(length, int(iters[0]) + 1)]


def _subspace_lattice(datum: BLDatum, rounds: int = 2) -> list:
    n = datum.n
    pool: list = []
    projs: list = []

    def add(V, into, into_proj):
        if not 0 < V.dim < n:
            return
        P = V.projector()
        if any(np.linalg.norm(P - Q) < ANGLE_TOL for Q in into_proj):
            return
        into.append(V)
        into_proj.append(P)

    for L in datum.maps:
        add(kernel(L), pool, projs)
    for _ in range(rounds):
        new, new_proj = list(pool), list(projs)
        for U, V in itertools.combinations(pool, 2):
            add(Subspace.span(np.vstack([U.basis, V.basis]), n), new, new_proj)
            # intersection = complement of the sum of complements
            comp = np.vstack([U.complement().basis, V.complement().basis])
            add(kernel(comp) if comp.size else Subspace.full(n), new, new_proj)
        if len(new) == len(pool):
            break
        pool, projs = new, new_proj
    return pool


def _violations(datum: BLDatum, bases: np.ndarray) -> np.ndarray:
    """For a stack of orthonormal bases (K, d, n), whether sum_j p_j dim(L_j V) < d."""
    K, d, _ = bases.shape
    total = np.zeros(K)
    for L, p in zip(datum.maps, datum.exponents):
        s = np.linalg.svd(np.einsum("ij,kdj->kid", L, bases), compute_uv=False)
        top = s[:, :1]
        r = np.sum(s > RANK_RTOL * np.where(top > 0, top, np.inf), axis=1)
        total += p * r
    return total < d - SCALING_TOL


def prescreen(datum: BLDatum, n_random: int = 200, seed: int = 0) -> Subspace | None:
    """Search for V with sum_j p_j dim(L_j V) < dim V, which forces BL = inf.

    Heuristic in what it searches, exact in what it reports: a returned subspace
    certifies divergence.
    """
    n = datum.n
    for V in _subspace_lattice(datum):
        if _violations(datum, V.basis[None])[0]:
            return V
    if n < 2 or n_random <= 0:
        return None
    rng = np.random.default_rng([seed, 0x5C12EE])
    dims = rng.integers(1, n, size=n_random)
    draws = rng.standard_normal((n_random, n, n))
    for d in range(1, n):
        sel = np.flatnonzero(dims == d)
        if sel.size == 0:
            continue
        q = np.linalg.qr(draws[sel][:, :, :d])[0]            # (K, n, d)
        bases = np.swapaxes(q, 1, 2)
        bad = np.flatnonzero(_violations(datum, bases))
        if bad.size:
            return Subspace.span(bases[bad[0]], n)
    return None


def _neg_log_ratio(z: np.ndarray, datum: BLDatum):
    """-log gaussian_ratio at A_j = G_j^T G_j and its gradient in the G_j.

    det M comes from a QR factorisation of the stacked rows sqrt(p_j) G_j L_j,
    sorted by norm, which stays accurate when the A_j are badly scaled."""
    G, o = [], 0
    for k in datum.dims:
        G.append(z[o:o + k * k].reshape(k, k))
        o += k * k
    K = np.vstack([math.sqrt(p) * g @ L for p, L, g in zip(datum.exponents, datum.maps, G)])
    K = K[np.argsort(-np.linalg.norm(K, axis=1), kind="stable")]
    R = np.linalg.qr(K, mode="r")
    d = np.abs(np.diag(R))
    if d.size < datum.n or np.any(d == 0):
        return math.inf, np.zeros_like(z)
    val = -2.0 * np.sum(np.log(d))
    grad = []
    for p, L, g in zip(datum.exponents, datum.maps, G):
        sign, ldg = np.linalg.slogdet(g)
        if sign == 0:
            return math.inf, np.zeros_like(z)
        val += 2.0 * p * ldg
        X = solve_triangular(R, L.T, trans="T")            # R^{-T} L^T
        C = X.T @ X                                         # L M^{-1} L^T
        grad.append((0.5 * p * 2.0 * (np.linalg.inv(g).T - g @ C)).ravel())
    return -0.5 * val, -np.concatenate(grad)


def polish(datum: BLDatum, start: GaussianInput, opts: SolverOptions, restarts: int = 40):
    """Quasi-Newton ascent in the factor coordinates A_j = G_j^T G_j.

    When the supremum is not attained the fixed point approaches it only
    sublinearly while the optimal Gaussians degenerate; L-BFGS follows that
    escape direction with roughly geometric gains. Returns (log ratio,
    witness, iterations, settled) where settled means the last restart
    gained less than the tolerance.
    """
    from scipy.optimize import minimize

    z = np.concatenate([np.linalg.cholesky(a).T.ravel() for a in start.blocks])
    best = -_neg_log_ratio(z, datum)[0]
    iters, settled = 0, False
    for _ in range(restarts):
        res = minimize(_neg_log_ratio, z, args=(datum,), jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-14, "maxcor": 30})
        iters += int(res.nit)
        gain = -res.fun - best
        if gain > 0:
            z, best = res.x, -res.fun
        if gain < opts.tol or best > opts.diverge_log:
            settled = gain < opts.tol
            break
    blocks, o = [], 0
    for k in datum.dims:
        g = z[o:o + k * k].reshape(k, k)
        blocks.append(g.T @ g)
        o += k * k
    return best, GaussianInput(tuple(blocks)), iters, settled


def bl_constant(datum: BLDatum, opts: SolverOptions | None = None) -> BLResult:
    """BL(L, p) as the best Gaussian ratio found by the fixed point and restarts."""
    opts = opts or SolverOptions()
    if datum.scaling_defect > SCALING_TOL:
        raise ScalingError(f"scaling condition violated (defect {datum.scaling_defect:.3e})")
    datum = datum.active()
    if datum.m == 0:
        return BLResult(1.0, "converged", GaussianInput(()), 0, [1.0])
    if datum.degenerate:
        return _infinite()
    if opts.prescreen:
        V = prescreen(datum, opts.prescreen_random, opts.seed)
        if V is not None:
            return _infinite(subspace=V)

    rng = np.random.default_rng(opts.seed)
    starts = [GaussianInput.identity(datum.dims)]
    for _ in range(opts.restarts):
        starts.append(GaussianInput(tuple(random_spd(k, rng) for k in datum.dims)))
    lr, status, iters, A, _ = run_fixed_point(datum, starts, opts)

    if np.any(status == kernels.DIVERGED):
        return BLResult(math.inf, "diverged-to-infinity", None, int(iters[0]),
                        [math.exp(v) if np.isfinite(v) else math.inf for v in lr])
    best = int(np.argmax(lr))
    witness = GaussianInput(tuple(A[j][best] for j in range(datum.m)))
    value, code, n_iter = float(lr[best]), int(status[best]), int(iters[0])
    if opts.polish:
        value2, witness2, extra, settled = polish(datum, witness, opts)
        n_iter += extra
        if value2 > opts.diverge_log:
            return BLResult(math.inf, "diverged-to-infinity", None, n_iter,
                            [math.exp(v) for v in lr])
        # the polished value starts from the stable re-evaluation of the
        # fixed-point witness and never decreases
        value, witness = value2, witness2
        if settled:
            code = kernels.CONVERGED
    return BLResult(
        value=math.exp(value),
        status=kernels.STATUS_NAMES[code],
        witness=witness,
        iterations=n_iter,
        restart_values=[math.exp(v) for v in lr],
    )


def bl_constant_batch(stack: np.ndarray, dims, exponents, opts: SolverOptions | None = None,
                      chunk: int = 65536) -> tuple:
    """BL for many data sharing one block structure, identity start only.

    ``stack`` has shape (N, sum(dims), n). Returns ``(values, status)`` where
    degenerate M(A) and divergence both yield +inf.
    """
    opts = opts or SolverOptions()
    stack = np.asarray(stack, dtype=float)
    N = stack.shape[0]
    p = np.asarray(exponents, dtype=float)
    keep = np.flatnonzero(p > 0)
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    rows = np.concatenate([np.arange(offsets[j], offsets[j + 1]) for j in keep])
    sub_dims = [dims[j] for j in keep]
    sub_off = np.concatenate([[0], np.cumsum(sub_dims)]).astype(int)
    stack = stack[:, rows, :]
    p = p[keep]

    def work(lo_hi):
        lo, hi = lo_hi
        A0 = [np.broadcast_to(np.eye(k), (hi - lo, k, k)).copy() for k in sub_dims]
        lr, st, _, _, _ = kernels.solve_batch(stack[lo:hi], sub_off, p, A0,
                                              max_iter=opts.max_iter, tol=opts.tol,
                                              diverge_log=opts.diverge_log,
                                              step=1.0 - opts.damping)
        return lr, st

    spans = [(lo, min(N, lo + chunk)) for lo in range(0, N, chunk)]
    workers = kernels.threads()
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(work, spans))
    else:
        parts = [work(s) for s in spans]
    if not parts:
        return np.zeros(0), np.zeros(0, dtype=int)
    lr = np.concatenate([a for a, _ in parts])
    st = np.concatenate([b for _, b in parts])
    return np.exp(lr), st


def bl_prime(subspaces, exponents, opts: SolverOptions | None = None) -> BLResult:
    """Quotient-form constant BL'(W, p) for inputs on R^n / W_j."""
    subspaces = list(subspaces)
    n = subspaces[0].ambient_dim
    p = [float(x) for x in exponents]
    total = sum(pj * (n - W.dim) for pj, W in zip(p, subspaces))
    if abs(total - n) > SCALING_TOL:
        raise ScalingError(f"sum p_j (n - dim W_j) = {total} differs from n = {n}")
    maps, ps = [], []
    for W, pj in zip(subspaces, p):
        if W.dim == n:
            continue
        maps.append(orthonormal_rows_with_kernel(W))
        ps.append(pj)
    return bl_constant(BLDatum(n, tuple(maps), tuple(ps)), opts)


def bl_restricted(datum: BLDatum, V: Subspace, opts: SolverOptions | None = None) -> BLResult:
    """BL_V: the datum restricted to V, each L_j required to map V onto its target."""
    restricted = []
    for L in datum.maps:
        R = restrict(L, V)
        if V.dim == 0 or rank(R) < L.shape[0]:
            return _infinite()
        restricted.append(R)
    return bl_constant(BLDatum(V.dim, tuple(restricted), datum.exponents), opts)


def _rel(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return math.inf
    return abs(a - b) / max(abs(a), abs(b))


def factorization_check(datum: BLDatum, opts: SolverOptions | None = None) -> dict:
    """Compare BL(L, p) with BL'(ker L_j, p) * prod_j |R_j|^{-p_j}."""
    if datum.degenerate:
        raise ValueError("factorization check needs surjective maps")
    lhs = bl_constant(datum, opts)
    prime = bl_prime([kernel(L) for L in datum.maps], datum.exponents, opts)
    norms = [r_norm(L) for L in datum.maps]
    rhs = prime.value * math.prod(r ** (-p) for r, p in zip(norms, datum.exponents))
    disc = _rel(lhs.value, rhs)
    return {"bl": lhs.value, "bl_prime": prime.value, "r_norms": norms, "rhs": rhs,
            "discrepancy": disc, "violated": math.isinf(disc),
            "status": (lhs.status, prime.status)}


def critical_split_check(datum_ext: BLDatum, opts: SolverOptions | None = None) -> dict:
    """Compare BL of the extended datum with det(L L^T)^{-1/2} BL on V = ker L_last."""
    p = datum_ext.exponents
    if abs(p[-1] - 1.0) > 1e-12:
        raise ValueError("the last exponent must be 1")
    if datum_ext.scaling_defect > SCALING_TOL:
        raise ScalingError("scaling condition violated")
    last = datum_ext.maps[-1]
    V = kernel(last)
    head = BLDatum(datum_ext.n, datum_ext.maps[:-1], p[:-1])
    for L in head.maps:
        if rank(restrict(L, V)) < L.shape[0]:
            raise ValueError("a map is not surjective on the kernel of the last map")
    lhs = bl_constant(datum_ext, opts)
    on_v = bl_restricted(head, V, opts)
    rhs = on_v.value / r_norm(last)
    return {"bl": lhs.value, "bl_on_v": on_v.value, "r_norm": r_norm(last), "rhs": rhs,
            "discrepancy": _rel(lhs.value, rhs), "status": (lhs.status, on_v.status)}


def transform_datum(datum: BLDatum, A) -> BLDatum:
    """The datum (L_j A)_j; BL of it is |det A|^{-1} BL(datum)."""
    A = as_matrix(A)
    return datum.with_maps([L @ A for L in datum.maps])


__all__ = [
    "BLDatum", "BLResult", "GaussianInput", "ScalingError", "SolverOptions",
    "bl_constant", "bl_constant_batch", "bl_prime", "bl_restricted",
    "critical_split_check", "factorization_check", "fixed_point_trace",
    "gaussian_ratio", "prescreen", "random_spd", "transform_datum", "RANK_RTOL",
]
