# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched Gaussian fixed-point solver.

Mirrors ``bllab._kernel_py.solve_batch`` step for step; see that module for
the iteration. Each datum is solved independently with the GIL released.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, pow, fabs, INFINITY, NAN
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t
from scipy.linalg.cython_lapack cimport dsyev

cnp.import_array()

cdef double PIVOT_RTOL = 1e-13


cdef int _cholesky(double* M, double* C, int n) noexcept nogil:
    """Lower Cholesky of row-major M into C; returns 0 on a degenerate pivot."""
    cdef int i, j, k
    cdef double s, d, scale = 0.0
    for i in range(n):
        if M[i * n + i] > scale:
            scale = M[i * n + i]
    if scale <= 0.0:
        return 0
    for i in range(n * n):
        C[i] = 0.0
    for j in range(n):
        s = M[j * n + j]
        for k in range(j):
            s -= C[j * n + k] * C[j * n + k]
        if s <= PIVOT_RTOL * scale:
            return 0
        d = sqrt(s)
        C[j * n + j] = d
        for i in range(j + 1, n):
            s = M[i * n + j]
            for k in range(j):
                s -= C[i * n + k] * C[j * n + k]
            C[i * n + j] = s / d
    return 1


cdef double _logdet_small(double* A, double* work, int k) noexcept nogil:
    cdef int i
    cdef double out = 0.0
    if k == 1:
        return log(A[0])
    if not _cholesky(A, work, k):
        return NAN
    for i in range(k):
        out += 2.0 * log(work[i * k + i])
    return out


cdef int _eigh(double* S, double* w, double* work, int lwork, int k) noexcept nogil:
    """In-place symmetric eigendecomposition; eigenvectors land in S as columns
    (column-major), i.e. row-major S[r*k + c] holds component c of vector r."""
    cdef char jobz = b'V'
    cdef char uplo = b'U'
    cdef int info = 0
    dsyev(&jobz, &uplo, &k, S, &k, w, work, &lwork, &info)
    return info


cdef void _sym_power(double* V, double* w, double expo, double* out, int k) noexcept nogil:
    """out = sum_r w_r^expo v_r v_r^T with v_r stored as rows of V."""
    cdef int r, a, b
    cdef double f
    for a in range(k * k):
        out[a] = 0.0
    for r in range(k):
        f = pow(w[r], expo)
        for a in range(k):
            for b in range(k):
                out[a * k + b] += f * V[r * k + a] * V[r * k + b]


cdef void _matmul(double* X, double* Y, double* out, int k) noexcept nogil:
    cdef int a, b, c
    cdef double s
    for a in range(k):
        for b in range(k):
            s = 0.0
            for c in range(k):
                s += X[a * k + c] * Y[c * k + b]
            out[a * k + b] = s


cdef void _geomean_step(double* A, double* C, double t, int k,
                        double* t1, double* t2, double* t3, double* w,
                        double* work, int lwork) noexcept nogil:
    """A <- A^{1/2} (A^{1/2} C A^{1/2})^{-t} A^{1/2}."""
    cdef int a, b
    if k == 1:
        A[0] = pow(A[0], 1.0 - t) * pow(C[0], -t)
        return
    for a in range(k * k):
        t1[a] = A[a]
    _eigh(t1, w, work, lwork, k)
    _sym_power(t1, w, 0.5, t2, k)          # t2 = A^{1/2}
    _matmul(t2, C, t1, k)
    _matmul(t1, t2, t3, k)                 # t3 = S
    for a in range(k):
        for b in range(a + 1, k):
            t3[a * k + b] = 0.5 * (t3[a * k + b] + t3[b * k + a])
            t3[b * k + a] = t3[a * k + b]
    _eigh(t3, w, work, lwork, k)
    _sym_power(t3, w, -t, t1, k)           # t1 = S^{-t}
    _matmul(t2, t1, t3, k)
    _matmul(t3, t2, t1, k)
    for a in range(k):
        for b in range(k):
            A[a * k + b] = 0.5 * (t1[a * k + b] + t1[b * k + a])


cdef void _solve_one(double* L, int R, int n, int* offs, int m, double* p,
                     double* A, int* aoffs, int max_iter, double tol,
                     double diverge_log, double step, double* trace, int trace_len,
                     double* out_lr, int64_t* out_status, int64_t* out_iters,
                     double* M, double* Ch, double* Y, double* t1, double* t2,
                     double* t3, double* w, double* work, int lwork) noexcept nogil:
    cdef int it, j, k, r0, a, b, c, i
    cdef double lr, prev = NAN, s, logdet_m
    cdef double* Aj
    cdef double* Lj
    for it in range(max_iter + 1):
        for a in range(n * n):
            M[a] = 0.0
        for j in range(m):
            k = offs[j + 1] - offs[j]
            Lj = L + offs[j] * n
            Aj = A + aoffs[j]
            for a in range(n):
                for b in range(n):
                    s = 0.0
                    for c in range(k):
                        for i in range(k):
                            s += Lj[c * n + a] * Aj[c * k + i] * Lj[i * n + b]
                    M[a * n + b] += p[j] * s
        out_iters[0] = it
        if not _cholesky(M, Ch, n):
            out_lr[0] = INFINITY
            out_status[0] = 1
            if it < trace_len:
                trace[it] = INFINITY
            return
        logdet_m = 0.0
        for a in range(n):
            logdet_m += 2.0 * log(Ch[a * n + a])
        lr = -0.5 * logdet_m
        for j in range(m):
            k = offs[j + 1] - offs[j]
            lr += 0.5 * p[j] * _logdet_small(A + aoffs[j], t1, k)
        if it < trace_len:
            trace[it] = lr
        out_lr[0] = lr
        if lr > diverge_log or lr != lr:
            out_lr[0] = INFINITY
            out_status[0] = 1
            return
        if it > 0 and fabs(lr - prev) < tol:
            out_status[0] = 0
            return
        if it == max_iter:
            out_status[0] = 2
            return
        prev = lr
        for j in range(m):
            k = offs[j + 1] - offs[j]
            r0 = offs[j]
            # Y = Ch^{-1} L_j^T, shape n x k
            for c in range(k):
                for a in range(n):
                    s = L[(r0 + c) * n + a]
                    for b in range(a):
                        s -= Ch[a * n + b] * Y[b * k + c]
                    Y[a * k + c] = s / Ch[a * n + a]
            # t3 = Y^T Y = C_j
            for a in range(k):
                for b in range(a, k):
                    s = 0.0
                    for c in range(n):
                        s += Y[c * k + a] * Y[c * k + b]
                    t3[a * k + b] = s
                    t3[b * k + a] = s
            for a in range(k * k):
                t2[a] = t3[a]
            _geomean_step(A + aoffs[j], t2, step, k, t1, Y + n * k, t3, w, work, lwork)


def solve_batch(L, offsets, p, A0, int max_iter=10000, double tol=1e-12,
                double diverge_log=50.0, double step=0.5, int trace_len=0):
    """Same contract as ``bllab._kernel_py.solve_batch``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] Lc = np.ascontiguousarray(L, dtype=np.float64)
    cdef int N = Lc.shape[0], R = Lc.shape[1], n = Lc.shape[2]
    offs_np = np.ascontiguousarray(offsets, dtype=np.intc)
    cdef int m = offs_np.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] pc = np.ascontiguousarray(p, dtype=np.float64)
    sizes = [int(offs_np[j + 1] - offs_np[j]) for j in range(m)]
    aoffs_np = np.zeros(m + 1, dtype=np.intc)
    for j in range(m):
        aoffs_np[j + 1] = aoffs_np[j] + sizes[j] * sizes[j]
    cdef int S = aoffs_np[m]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] Ap = np.empty((N, S), dtype=np.float64)
    for j in range(m):
        Ap[:, aoffs_np[j]:aoffs_np[j + 1]] = np.asarray(A0[j], dtype=np.float64).reshape(N, -1)
    cdef int tl = max(trace_len, 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] trace = np.full((N, tl), np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] lr = np.full(N, np.nan)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] status = np.full(N, 2, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] iters = np.zeros(N, dtype=np.int64)
    cdef int[::1] offs_v = offs_np
    cdef int[::1] aoffs_v = aoffs_np
    cdef int kmax = max(sizes)
    cdef int lwork = max(64, 8 * kmax)
    cdef double* M = <double*> malloc(n * n * sizeof(double))
    cdef double* Ch = <double*> malloc(n * n * sizeof(double))
    cdef double* Y = <double*> malloc((n * kmax + kmax * kmax) * sizeof(double))
    cdef double* t1 = <double*> malloc(kmax * kmax * sizeof(double))
    cdef double* t2 = <double*> malloc(kmax * kmax * sizeof(double))
    cdef double* t3 = <double*> malloc(kmax * kmax * sizeof(double))
    cdef double* w = <double*> malloc(kmax * sizeof(double))
    cdef double* work = <double*> malloc(lwork * sizeof(double))
    cdef int b
    cdef int tlen = trace_len
    try:
        with nogil:
            for b in range(N):
                _solve_one(&Lc[b, 0, 0], R, n, &offs_v[0], m, &pc[0], &Ap[b, 0],
                           &aoffs_v[0], max_iter, tol, diverge_log, step,
                           &trace[b, 0], tlen, &lr[b], &status[b], &iters[b],
                           M, Ch, Y, t1, t2, t3, w, work, lwork)
    finally:
        free(M); free(Ch); free(Y); free(t1); free(t2); free(t3); free(w); free(work)
    A_out = [Ap[:, aoffs_np[j]:aoffs_np[j + 1]].reshape(N, sizes[j], sizes[j]).copy()
             for j in range(m)]
    return lr, status, iters, A_out, trace[:, :trace_len]
