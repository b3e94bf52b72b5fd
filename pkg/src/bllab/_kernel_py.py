"""Pure numpy implementation of the batched Gaussian fixed-point solver.

This is the fallback used when the compiled extension is unavailable, and
the reference the extension is tested against. Both implement the same
iteration step for step:

    M(A)  = sum_j p_j L_j^T A_j L_j
    C_j   = L_j M(A)^{-1} L_j^T
    A_j  <- A_j #_t C_j^{-1}        (weighted geometric mean, t = step)

with log ratio ``0.5 * (sum_j p_j logdet A_j - logdet M)`` evaluated at every
iterate. Status codes: 0 converged, 1 diverged to infinity, 2 max iterations.
"""
from __future__ import annotations

import numpy as np

CONVERGED, DIVERGED, MAX_ITER = 0, 1, 2
#: a Cholesky pivot below this fraction of the largest diagonal entry flags a degenerate M
PIVOT_RTOL = 1e-13


def _batch_cholesky(M: np.ndarray):
    """Lower Cholesky factors of a stack of SPD matrices.

    Returns ``(chol, ok)``; entries with a pivot below ``PIVOT_RTOL`` times the
    largest diagonal entry are flagged not ok (their factor is garbage).
    """
    N, n, _ = M.shape
    chol = np.zeros_like(M)
    ok = np.ones(N, dtype=bool)
    scale = np.max(np.diagonal(M, axis1=1, axis2=2), axis=1)
    thresh = PIVOT_RTOL * np.where(scale > 0, scale, 1.0)
    ok &= scale > 0
    for j in range(n):
        d = M[:, j, j] - np.einsum("nk,nk->n", chol[:, j, :j], chol[:, j, :j])
        bad = d <= thresh
        ok &= ~bad
        d = np.sqrt(np.where(bad, 1.0, d))
        chol[:, j, j] = d
        for i in range(j + 1, n):
            s = M[:, i, j] - np.einsum("nk,nk->n", chol[:, i, :j], chol[:, j, :j])
            chol[:, i, j] = s / d
    return chol, ok


def _forward_solve(chol: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve chol @ Y = B for lower-triangular stacks."""
    N, n, _ = chol.shape
    Y = np.empty_like(B)
    for i in range(n):
        acc = B[:, i, :] - np.einsum("nk,nkc->nc", chol[:, i, :i], Y[:, :i, :])
        Y[:, i, :] = acc / chol[:, i, i][:, None]
    return Y


def _logdet_spd(A: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 1:
        return np.log(A[:, 0, 0])
    return np.linalg.slogdet(A)[1]


def _geomean_step(A: np.ndarray, C: np.ndarray, t: float) -> np.ndarray:
    """A #_t C^{-1} = A^{1/2} (A^{1/2} C A^{1/2})^{-t} A^{1/2}."""
    if A.shape[-1] == 1:
        return A ** (1.0 - t) * C ** (-t)
    w, v = np.linalg.eigh(A)
    ah = (v * np.sqrt(w)[:, None, :]) @ np.swapaxes(v, 1, 2)
    S = ah @ C @ ah
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    ws, vs = np.linalg.eigh(S)
    st = (vs * (ws ** (-t))[:, None, :]) @ np.swapaxes(vs, 1, 2)
    out = ah @ st @ ah
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def solve_batch(L, offsets, p, A0, max_iter=10000, tol=1e-12, diverge_log=50.0,
                step=0.5, trace_len=0):
    """Run the fixed-point iteration on ``N`` data sharing a block structure.

    ``L`` has shape (N, R, n) with map j occupying rows offsets[j]:offsets[j+1];
    ``A0`` is a list of m arrays of shape (N, n_j, n_j).
    Returns ``(log_ratio, status, iterations, A, trace)``.
    """
    L = np.ascontiguousarray(L, dtype=float)
    N, R, n = L.shape
    offsets = [int(o) for o in offsets]
    m = len(offsets) - 1
    p = np.asarray(p, dtype=float)
    A = [np.array(a, dtype=float, copy=True) for a in A0]
    Ls = [L[:, offsets[j]:offsets[j + 1], :] for j in range(m)]
    LsT = [np.swapaxes(x, 1, 2) for x in Ls]

    log_ratio = np.full(N, np.nan)
    status = np.full(N, MAX_ITER, dtype=np.int64)
    iters = np.zeros(N, dtype=np.int64)
    trace = np.full((N, trace_len), np.nan)
    prev = np.full(N, np.nan)
    active = np.arange(N)

    for it in range(max_iter + 1):
        if active.size == 0:
            break
        M = np.zeros((active.size, n, n))
        for j in range(m):
            M += p[j] * (LsT[j][active] @ A[j][active] @ Ls[j][active])
        chol, ok = _batch_cholesky(M)
        logdet_m = 2.0 * np.sum(np.log(np.abs(np.diagonal(chol, axis1=1, axis2=2))), axis=1)
        lr = -0.5 * logdet_m
        for j in range(m):
            lr += 0.5 * p[j] * _logdet_spd(A[j][active])
        lr = np.where(ok, lr, np.inf)
        if it < trace_len:
            trace[active, it] = lr
        iters[active] = it
        log_ratio[active] = lr

        div = ~ok | (lr > diverge_log)
        conv = ~div & (it > 0) & (np.abs(lr - prev[active]) < tol)
        status[active[div]] = DIVERGED
        log_ratio[active[div]] = np.inf
        status[active[conv]] = CONVERGED
        keep = ~(div | conv)
        if it == max_iter:
            status[active[keep]] = MAX_ITER
            break
        prev[active] = lr
        active, chol = active[keep], chol[keep]
        if active.size == 0:
            break
        for j in range(m):
            Y = _forward_solve(chol, LsT[j][active])
            C = np.swapaxes(Y, 1, 2) @ Y
            C = 0.5 * (C + np.swapaxes(C, 1, 2))
            A[j][active] = _geomean_step(A[j][active], C, step)

    return log_ratio, status, iters, A, trace
