"""Pure numpy implementation of the stepping kernels.

Mirrors :mod:`gltau._kernels` (compiled) operation for operation; used when the
extension is not built or when ``GLTAU_PURE_PYTHON=1``.  Batched arrays have
shape ``(B, N, N)`` and are updated in place.

The matrix exponential is a truncated Taylor series evaluated by the
Paterson-Stockmeyer scheme, with scaling and squaring.  The degree is the
smallest one whose truncation bound ``x^(k+1) / (k+1)! * exp(2x)`` (x the
1-norm) drops below ``EXPM_TOL``.
"""
import math

import numpy as np

BACKEND = "python"

EXPM_TOL = 2.0 ** -53
MAX_DEGREE = 12


def truncation_bound(x, k):
    """Relative remainder bound of the degree-k Taylor polynomial at 1-norm x."""
    return x ** (k + 1) / math.factorial(k + 1) * math.exp(2 * x)


def _threshold(k, tol=EXPM_TOL):
    lo, hi = 0.0, 8.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if truncation_bound(mid, k) <= tol:
            lo = mid
        else:
            hi = mid
    return lo


THETAS = tuple(_threshold(k) for k in range(MAX_DEGREE + 1))


def choose_degree(norm1):
    """Return (degree, block size, squarings) for a matrix of 1-norm ``norm1``."""
    squarings = 0
    if norm1 > THETAS[MAX_DEGREE]:
        squarings = max(int(math.ceil(math.log2(norm1 / THETAS[MAX_DEGREE]))), 0)
        norm1 = norm1 / 2.0 ** squarings
    k = next(k for k in range(1, MAX_DEGREE + 1) if norm1 <= THETAS[k])
    block = int(math.ceil(math.sqrt(k + 1)))
    return k, block, squarings


def _taylor(powers, y, k, block, sign):
    # Paterson-Stockmeyer with powers[j] = X^j (j < block) and y = X^block
    nblocks = (k + block) // block
    coef = [1.0 / math.factorial(j) for j in range(k + 1)]

    def chunk(i):
        out = 0
        for j in range(block):
            idx = i * block + j
            if idx <= k:
                out = out + (coef[idx] * sign ** j) * powers[j]
        return out

    r = chunk(nblocks - 1)
    ys = y if sign ** block > 0 else -y
    for i in range(nblocks - 2, -1, -1):
        r = ys @ r + chunk(i)
    return r


def expm_batch(x, inverse=False):
    """Batched exp(X) (and exp(-X) when ``inverse``) by scaling and squaring."""
    x = np.asarray(x, dtype=complex)
    norm1 = float(np.abs(x).sum(axis=-2).max()) if x.size else 0.0
    k, block, squarings = choose_degree(norm1)
    xs = x / 2.0 ** squarings if squarings else x
    eye = np.broadcast_to(np.eye(x.shape[-1], dtype=complex), x.shape)
    powers = [eye, xs]
    for _ in range(2, block + 1):
        powers.append(powers[-1] @ xs)
    y = powers.pop()
    e = _taylor(powers, y, k, block, 1.0)
    einv = _taylor(powers, y, k, block, -1.0) if inverse else None
    for _ in range(squarings):
        e = e @ e
        if inverse:
            einv = einv @ einv
    e = np.ascontiguousarray(e)
    return (e, np.ascontiguousarray(einv)) if inverse else e


def elliptic_combine(r1, r2, ca, cb):
    """``ca * herm(r1) + cb * herm(r2)`` where herm(r) = (r + r^T)/2 + i (r - r^T)/2.

    ``r2`` may be None (then only the first term is formed).
    """
    def herm(r):
        rt = np.swapaxes(r, -1, -2)
        h = np.empty(r.shape, dtype=complex)
        h.real = (r + rt) * 0.5
        h.imag = (r - rt) * 0.5
        return h

    z = ca * herm(r1)
    if r2 is not None:
        z += cb * herm(r2)
    return z


def expm_update(g, ginv, x, left=True):
    """G <- G exp(X) (left) or exp(X) G (right); G^-1 updated by exp(-X)."""
    e, einv = expm_batch(x, inverse=True) if ginv is not None else (expm_batch(x), None)
    if left:
        g[...] = g @ e
        if ginv is not None:
            ginv[...] = einv @ ginv
    else:
        g[...] = e @ g
        if ginv is not None:
            ginv[...] = ginv @ einv


def euler_update(g, k, x, c, left=True):
    """Ito-Euler step G <- G (I + X - c) and K <- (I - X - c) K (mirrored when right)."""
    n = x.shape[-1]
    eye = np.eye(n, dtype=complex)
    fwd = x - c * eye
    bwd = -x - c * eye
    if left:
        g += g @ fwd
        if k is not None:
            k += bwd @ k
    else:
        g += fwd @ g
        if k is not None:
            k += k @ bwd
