# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled stepping kernels.

Each replica of a batch is advanced with direct BLAS calls on row-major
buffers; the loops run without the GIL so replica blocks can be spread over a
thread pool.  Row-major C = A B is obtained as the column-major product B A.
Degree selection and truncation thresholds are shared with the numpy fallback.
"""
from libc.math cimport sqrt, ceil, log2, pow
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memset

from scipy.linalg.cython_blas cimport zgemm

from ._kernels_py import THETAS, MAX_DEGREE

BACKEND = "compiled"

ctypedef double complex z

DEF KMAX = 12
# workspace (in matrices) needed by _expm
DEF EXPM_WORK = KMAX + 4

cdef double _thetas[KMAX + 1]
cdef double _invfact[KMAX + 1]

if MAX_DEGREE != KMAX:
    raise ImportError("compiled kernels out of sync with the numpy fallback")
_f = 1.0
for _k in range(KMAX + 1):
    _thetas[_k] = THETAS[_k]
    if _k > 0:
        _f *= _k
    _invfact[_k] = 1.0 / _f


cdef inline void _mm(int n, z alpha, z* a, z* b, z beta, z* c) noexcept nogil:
    # row-major c = alpha * a @ b + beta * c
    cdef char tr = b'N'
    zgemm(&tr, &tr, &n, &n, &n, &alpha, b, &n, a, &n, &beta, c, &n)


cdef inline void _chunk(int n, z** powers, int block, int i, int k, double sign, z* out) noexcept nogil:
    # out = sum_j c_{i*block+j} sign^j X^j over the indices that do not exceed k;
    # complex buffers are walked as interleaved doubles since every c is real
    cdef int nd = 2 * n * n
    cdef int j, idx, t
    cdef double c, sg = 1.0
    cdef double* o = <double*>out
    cdef double* pw
    memset(out, 0, n * n * sizeof(z))
    for j in range(block):
        idx = i * block + j
        if idx > k:
            break
        c = _invfact[idx] * sg
        if j == 0:
            for t in range(n):
                o[2 * (t * n + t)] += c
        else:
            pw = <double*>powers[j]
            for t in range(nd):
                o[t] += c * pw[t]
        if sign < 0:
            sg = -sg


cdef void _taylor(int n, z** powers, z* y, int k, int block, double sign,
                  z* out, z* scratch) noexcept nogil:
    # Paterson-Stockmeyer evaluation of the degree-k Taylor polynomial of exp(sign X)
    cdef int nblocks = (k + block) // block
    cdef int i
    cdef double ysign = -1.0 if (sign < 0 and block % 2 == 1) else 1.0
    cdef z* r = out
    cdef z* acc = scratch
    cdef z* tmp
    _chunk(n, powers, block, nblocks - 1, k, sign, r)
    for i in range(nblocks - 2, -1, -1):
        _chunk(n, powers, block, i, k, sign, acc)
        _mm(n, ysign, y, r, 1.0, acc)
        tmp = r
        r = acc
        acc = tmp
    if r != out:
        memcpy(out, r, n * n * sizeof(z))


cdef void _expm(int n, z* x, z* e, z* einv, bint want_inv, z* work) noexcept nogil:
    # exp(X) into e and, when want_inv, exp(-X) into einv
    cdef int nn = n * n
    cdef int i, j, k = 1, block, squarings = 0
    cdef double col, norm1 = 0.0, scale = 1.0
    cdef z* powers[KMAX + 2]
    cdef double* xd
    cdef double* pd
    cdef z* scratch = work

    for j in range(n):
        col = 0.0
        for i in range(n):
            col += sqrt(x[i * n + j].real * x[i * n + j].real + x[i * n + j].imag * x[i * n + j].imag)
        if col > norm1:
            norm1 = col
    if norm1 > _thetas[KMAX]:
        squarings = <int>ceil(log2(norm1 / _thetas[KMAX]))
        if squarings < 0:
            squarings = 0
        scale = pow(0.5, squarings)
        norm1 = norm1 * scale
    while k < KMAX and norm1 > _thetas[k]:
        k += 1
    block = <int>ceil(sqrt(k + 1.0))

    for j in range(block + 1):
        powers[j] = work + (1 + j) * nn
    xd = <double*>x
    pd = <double*>powers[1]
    for i in range(2 * nn):
        pd[i] = xd[i] * scale
    for j in range(2, block + 1):
        _mm(n, 1.0, powers[j - 1], powers[1], 0.0, powers[j])

    _taylor(n, powers, powers[block], k, block, 1.0, e, scratch)
    if want_inv:
        _taylor(n, powers, powers[block], k, block, -1.0, einv, scratch)
    for i in range(squarings):
        _mm(n, 1.0, e, e, 0.0, scratch)
        memcpy(e, scratch, nn * sizeof(z))
        if want_inv:
            _mm(n, 1.0, einv, einv, 0.0, scratch)
            memcpy(einv, scratch, nn * sizeof(z))


def expm_batch(z[:, :, ::1] x, bint inverse=False):
    """Batched exp(X) (and exp(-X) when ``inverse``); returns numpy arrays."""
    import numpy as np
    cdef Py_ssize_t nb = x.shape[0]
    cdef int n = <int>x.shape[1]
    out = np.empty((nb, n, n), dtype=complex)
    outinv = np.empty((nb if inverse else 1, n, n), dtype=complex)
    cdef z[:, :, ::1] e = out
    cdef z[:, :, ::1] ei = outinv
    cdef z* work = <z*>malloc(EXPM_WORK * n * n * sizeof(z))
    cdef Py_ssize_t r
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(nb):
                _expm(n, &x[r, 0, 0], &e[r, 0, 0], &ei[r if inverse else 0, 0, 0], inverse, work)
    finally:
        free(work)
    return (out, outinv) if inverse else out


def elliptic_combine(double[:, :, ::1] r1, r2, z ca, z cb):
    """``ca * herm(r1) + cb * herm(r2)`` where herm(r) = (r + r^T)/2 + i (r - r^T)/2.

    ``r2`` may be None (then only the first term is formed).
    """
    import numpy as np
    cdef Py_ssize_t nb = r1.shape[0]
    cdef int n = <int>r1.shape[1]
    out = np.empty((nb, n, n), dtype=complex)
    cdef z[:, :, ::1] o = out
    cdef bint two = r2 is not None
    cdef double[:, :, ::1] s2 = r2 if two else r1
    cdef Py_ssize_t b
    cdef int i, j
    cdef z h1, h2
    with nogil:
        for b in range(nb):
            for i in range(n):
                for j in range(n):
                    h1.real = (r1[b, i, j] + r1[b, j, i]) * 0.5
                    h1.imag = (r1[b, i, j] - r1[b, j, i]) * 0.5
                    if two:
                        h2.real = (s2[b, i, j] + s2[b, j, i]) * 0.5
                        h2.imag = (s2[b, i, j] - s2[b, j, i]) * 0.5
                        o[b, i, j] = ca * h1 + cb * h2
                    else:
                        o[b, i, j] = ca * h1
    return out


def expm_update(z[:, :, ::1] g, ginv, z[:, :, ::1] x, bint left=True):
    """G <- G exp(X) (left) or exp(X) G (right); G^-1 updated by exp(-X)."""
    cdef Py_ssize_t nb = g.shape[0]
    cdef int n = <int>g.shape[1]
    cdef int nn = n * n
    cdef bint want_inv = ginv is not None
    cdef z[:, :, ::1] gi = ginv if want_inv else g
    cdef z* work = <z*>malloc((EXPM_WORK + 3) * nn * sizeof(z))
    if work == NULL:
        raise MemoryError()
    cdef z* e = work + EXPM_WORK * nn
    cdef z* einv = e + nn
    cdef z* tmp = einv + nn
    cdef Py_ssize_t r
    try:
        with nogil:
            for r in range(nb):
                _expm(n, &x[r, 0, 0], e, einv, want_inv, work)
                memcpy(tmp, &g[r, 0, 0], nn * sizeof(z))
                if left:
                    _mm(n, 1.0, tmp, e, 0.0, &g[r, 0, 0])
                else:
                    _mm(n, 1.0, e, tmp, 0.0, &g[r, 0, 0])
                if want_inv:
                    memcpy(tmp, &gi[r, 0, 0], nn * sizeof(z))
                    if left:
                        _mm(n, 1.0, einv, tmp, 0.0, &gi[r, 0, 0])
                    else:
                        _mm(n, 1.0, tmp, einv, 0.0, &gi[r, 0, 0])
    finally:
        free(work)


def euler_update(z[:, :, ::1] g, k, z[:, :, ::1] x, z c, bint left=True):
    """Ito-Euler step G <- G (I + X - c) and K <- (I - X - c) K (mirrored when right)."""
    cdef Py_ssize_t nb = g.shape[0]
    cdef int n = <int>g.shape[1]
    cdef int nn = n * n
    cdef bint has_k = k is not None
    cdef z[:, :, ::1] kk = k if has_k else g
    cdef z* work = <z*>malloc(3 * nn * sizeof(z))
    if work == NULL:
        raise MemoryError()
    cdef z* fwd = work
    cdef z* bwd = work + nn
    cdef z* tmp = work + 2 * nn
    cdef Py_ssize_t r
    cdef int i
    cdef double* xr
    cdef double* fd = <double*>fwd
    cdef double* bd = <double*>bwd
    try:
        with nogil:
            for r in range(nb):
                xr = <double*>&x[r, 0, 0]
                for i in range(2 * nn):
                    fd[i] = xr[i]
                    bd[i] = -xr[i]
                for i in range(n):
                    fwd[i * n + i] = fwd[i * n + i] - c
                    bwd[i * n + i] = bwd[i * n + i] - c
                memcpy(tmp, &g[r, 0, 0], nn * sizeof(z))
                if left:
                    _mm(n, 1.0, tmp, fwd, 1.0, &g[r, 0, 0])
                else:
                    _mm(n, 1.0, fwd, tmp, 1.0, &g[r, 0, 0])
                if has_k:
                    memcpy(tmp, &kk[r, 0, 0], nn * sizeof(z))
                    if left:
                        _mm(n, 1.0, bwd, tmp, 1.0, &kk[r, 0, 0])
                    else:
                        _mm(n, 1.0, tmp, bwd, 1.0, &kk[r, 0, 0])
    finally:
        free(work)
