"""Integration of the multiplicative (lambda, tau)-Brownian motions.

Every process ``l`` solves ``dG = sigma_l G (i dZ - sigma_l/2 (lambda - tau) dt)``
(left orientation) or the mirrored equation with the noise acting on the left
(right orientation).  Two schemes are provided:

``Geometric``
    ``G <- G expm(i sigma dZ)``.  The exponential of the Gaussian increment
    reproduces the Ito drift exactly in law, every factor is invertible and,
    when ``dZ`` is Hermitian, unitary.  The inverse is carried along with the
    factor ``expm(-i sigma dZ)``.
``ItoEuler``
    ``G <- G (I + i sigma dZ - sigma^2 (lambda - tau) dt / 2)``; inverses are
    obtained by a linear solve at snapshot times.

Replicas are integrated in fixed-size blocks.  Block ``k`` of an experiment
with seed ``s`` draws all its noise from ``make_rng(s, k)``, so results depend
on ``(config, seed, block size)`` only, never on the number of worker threads.
"""
from __future__ import annotations

import cmath
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import SingularityError
from .model import ModelParams, make_rng
from .words import Letter, Variant

__all__ = [
    "Scheme",
    "Orientation",
    "TrajectoryConfig",
    "GlSample",
    "DriftReport",
    "BracketEstimate",
    "COND_MAX",
    "INVERSE_RTOL",
    "DEFAULT_BLOCK",
    "default_dt",
    "increment_sampler",
    "simulate",
    "simulate_batch",
    "simulate_with_inverse_tracking",
    "run_replicas",
    "estimate_bracket",
    "bracket_template",
    "evaluate_word",
    "read_matrix_file",
]

COND_MAX = 1e12
INVERSE_RTOL = 1e-8
DEFAULT_BLOCK = 64


class Scheme(str, enum.Enum):
    GEOMETRIC = "Geometric"
    ITO_EULER = "ItoEuler"


class Orientation(str, enum.Enum):
    LEFT = "LeftInvariant"
    RIGHT = "RightInvariant"


def default_dt(t_final: float) -> float:
    """``min(1e-2, t_final / 100)``; 1e-2 for a zero horizon."""
    return min(1e-2, t_final / 100) if t_final > 0 else 1e-2


@dataclass(frozen=True)
class TrajectoryConfig:
    """Discretisation of one experiment.

    The horizon is split into ``steps = ceil(t_final / dt)`` equal steps of
    length ``step <= dt``.  Snapshot times are rounded to the nearest grid
    point; ``GlSample.time`` records the grid time actually used.
    """

    n: int
    params: ModelParams
    t_final: float
    dt: Optional[float] = None
    scheme: Scheme = Scheme.GEOMETRIC
    orientation: Orientation = Orientation.LEFT
    seed: int = 0
    snapshot_times: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.n!r}")
        t = float(self.t_final)
        if not (t >= 0 and math.isfinite(t)):
            raise ValueError(f"t_final must be a finite nonnegative number, got {self.t_final!r}")
        dt = default_dt(t) if self.dt is None else float(self.dt)
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        if t > 0 and dt > t * (1 + 1e-12):
            raise ValueError(f"dt = {dt} exceeds t_final = {t}")
        snaps = (t,) if self.snapshot_times is None else tuple(float(s) for s in self.snapshot_times)
        if not snaps:
            raise ValueError("at least one snapshot time is required")
        if any(b < a for a, b in zip(snaps, snaps[1:])):
            raise ValueError("snapshot times must be sorted")
        if snaps[0] < 0 or snaps[-1] > t * (1 + 1e-12):
            raise ValueError("snapshot times must lie in [0, t_final]")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t_final", t)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "snapshot_times", snaps)

    @property
    def p(self) -> int:
        return self.params.p

    @property
    def steps(self) -> int:
        if self.t_final == 0:
            return 0
        return max(1, math.ceil(self.t_final / self.dt - 1e-9))

    @property
    def step(self) -> float:
        return self.t_final / self.steps if self.steps else 0.0

    @property
    def snapshot_steps(self) -> Tuple[int, ...]:
        if not self.steps:
            return tuple(0 for _ in self.snapshot_times)
        return tuple(min(self.steps, int(round(s / self.step))) for s in self.snapshot_times)


class GlSample:
    """Realised matrices ``(G, G*, G^-1, G^-1*)`` of ``p`` processes at one time.

    Arrays have shape ``(p, N, N)``, or ``(B, p, N, N)`` for a batch of ``B``
    replicas.  Adjoints are computed once at construction as exact conjugate
    transposes and all arrays are read-only.

    Parameters
    ----------
    time : float
    g : ndarray
    g_inv : ndarray or None
        None when the inverse was not requested; inverse letters then raise.
    deterministic : sequence of ndarray, optional
        Fixed ``N x N`` matrices ``A_j`` (shared by every replica).
    seed : int, optional
        Seed of the experiment that produced the sample.
    """

    def __init__(self, time, g, g_inv=None, deterministic=(), seed=None):
        self.time = float(time)
        self.seed = seed
        self.g = _frozen(g)
        self.g_star = _frozen(_adj(self.g))
        if g_inv is None:
            self.g_inv = self.g_inv_star = None
        else:
            self.g_inv = _frozen(g_inv)
            self.g_inv_star = _frozen(_adj(self.g_inv))
        n = self.g.shape[-1]
        dets = [_frozen(a) for a in deterministic]
        for a in dets:
            if a.shape != (n, n):
                raise ValueError(f"deterministic matrix of shape {a.shape}, expected {(n, n)}")
        self.deterministic = tuple(dets)
        self.deterministic_star = tuple(_frozen(_adj(a)) for a in dets)

    @property
    def n(self) -> int:
        return self.g.shape[-1]

    @property
    def p(self) -> int:
        return self.g.shape[-3]

    @property
    def batch_size(self) -> Optional[int]:
        return self.g.shape[0] if self.g.ndim == 4 else None

    def replica(self, i: int) -> "GlSample":
        """Single replica ``i`` of a batched sample."""
        if self.batch_size is None:
            raise ValueError("sample is not batched")
        return GlSample(self.time, self.g[i], None if self.g_inv is None else self.g_inv[i],
                        self.deterministic, self.seed)

    def letter_matrix(self, letter: Letter) -> np.ndarray:
        if letter.det:
            if not 0 <= letter.index < len(self.deterministic):
                raise IndexError(f"no deterministic matrix a{letter.index + 1}")
            if letter.variant == Variant.ID:
                return self.deterministic[letter.index]
            if letter.variant == Variant.STAR:
                return self.deterministic_star[letter.index]
            raise ValueError("deterministic letters admit only the identity and adjoint variants")
        if not 0 <= letter.index < self.p:
            raise IndexError(f"no process g{letter.index + 1} (arity {self.p})")
        v = letter.variant
        if v >= Variant.INV and self.g_inv is None:
            raise ValueError("sample carries no inverses")
        arr = (self.g, self.g_star, self.g_inv, self.g_inv_star)[v]
        return arr[..., letter.index, :, :]

    def inverse_error(self) -> float:
        """Largest ``||G G^-1 - I|| / (||G|| ||G^-1||)`` (spectral norms) over processes and replicas."""
        if self.g_inv is None:
            raise ValueError("sample carries no inverses")
        eye = np.eye(self.n)
        err = np.linalg.norm(self.g @ self.g_inv - eye, ord=2, axis=(-2, -1))
        scale = np.linalg.norm(self.g, ord=2, axis=(-2, -1)) * np.linalg.norm(self.g_inv, ord=2, axis=(-2, -1))
        return float(np.max(err / scale))


def _adj(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _frozen(a):
    a = np.array(a, dtype=complex, order="C", copy=True)
    a.setflags(write=False)
    return a


def increment_sampler(params: ModelParams, sigma: float, n: int, dt: float):
    """Return ``draw(rng, size)`` producing ``i sigma dZ`` of shape ``(size, n, n)``.

    With ``dZ = exp(i theta)(a dH + i b dH~)`` and ``dH = s herm(R)``,
    ``s = sqrt(dt / n)``: one standard normal array is drawn per nonzero
    coefficient, ``a`` first.
    """
    s = math.sqrt(dt / n)
    rot = cmath.exp(1j * params.theta) if params.theta != 0.0 else 1.0
    ca = 1j * sigma * rot * params.a * s
    cb = -sigma * rot * params.b * s
    use_a, use_b = params.a != 0.0, params.b != 0.0

    def draw(rng, size):
        shape = (size, n, n)
        if use_a and use_b:
            r1 = rng.standard_normal(shape)
            r2 = rng.standard_normal(shape)
            return kernels.elliptic_combine(r1, r2, ca, cb)
        r = rng.standard_normal(shape)
        return kernels.elliptic_combine(r, None, ca if use_a else cb, 0.0)

    return draw


def _integrate(config: TrajectoryConfig, rng, size: int, inverse: bool = True, track_k: bool = False):
    """Integrate ``size`` replicas; return per snapshot ``(G, G^-1 or K or None)`` of shape (size, p, N, N)."""
    n, p = config.n, config.p
    params = config.params
    left = config.orientation == Orientation.LEFT
    geometric = config.scheme == Scheme.GEOMETRIC
    h = config.step
    eye = np.eye(n, dtype=complex)
    gs = [np.tile(eye, (size, 1, 1)) for _ in range(p)]
    second = inverse if geometric else track_k
    ks = [np.tile(eye, (size, 1, 1)) for _ in range(p)] if second else None
    samplers = [increment_sampler(params, sig, n, h) for sig in params.sigmas] if config.steps else []
    drifts = [0.5 * sig * sig * params.drift_rate * h for sig in params.sigmas]

    targets = config.snapshot_steps
    out = []
    pos = 0

    def snap():
        g = np.stack(gs, axis=1)
        if geometric:
            return g, (np.stack(ks, axis=1) if ks is not None else None)
        _check_conditioning(g)
        if track_k:
            return g, np.stack(ks, axis=1)
        return g, (np.linalg.inv(g) if inverse else None)

    while pos < len(targets) and targets[pos] == 0:
        out.append(snap())
        pos += 1
    for step in range(1, config.steps + 1):
        for ell in range(p):
            x = samplers[ell](rng, size)
            k = ks[ell] if ks is not None else None
            if geometric:
                kernels.expm_update(gs[ell], k, x, left)
            else:
                kernels.euler_update(gs[ell], k, x, drifts[ell], left)
        if not geometric and not np.all(np.isfinite(gs[0])):
            raise SingularityError("Ito-Euler iterate overflowed; dt is too large")
        while pos < len(targets) and targets[pos] == step:
            out.append(snap())
            pos += 1
    return out


def _check_conditioning(g):
    if not np.all(np.isfinite(g)):
        raise SingularityError("Ito-Euler iterate is not finite; dt is too large")
    cond = np.linalg.cond(g)
    worst = float(np.max(cond))
    if not worst <= COND_MAX:
        raise SingularityError(f"Ito-Euler iterate has condition number {worst:.3g} > {COND_MAX:g}; reduce dt")


def _snapshot_samples(config, snaps, deterministic):
    times = [k * config.step for k in config.snapshot_steps]
    return [GlSample(t, g, gi, deterministic, config.seed) for t, (g, gi) in zip(times, snaps)]


def simulate(config: TrajectoryConfig, rng=None, deterministic=(), inverse: bool = True) -> List[GlSample]:
    """Integrate one trajectory; one sample of shape (p, N, N) per snapshot time.

    ``rng`` defaults to the stream ``make_rng(config.seed, 0)``.

    Raises
    ------
    SingularityError
        ItoEuler only: an iterate's condition number exceeds ``COND_MAX``.
    """
    batch = simulate_batch(config, 1, rng, deterministic, inverse)
    return [s.replica(0) for s in batch]


def simulate_batch(config: TrajectoryConfig, size: int, rng=None, deterministic=(),
                   inverse: bool = True) -> List[GlSample]:
    """Integrate ``size`` independent replicas driven by one generator."""
    rng = make_rng(config.seed, 0) if rng is None else rng
    return _snapshot_samples(config, _integrate(config, rng, int(size), inverse), deterministic)


@dataclass(frozen=True)
class DriftReport:
    """Deviation of the Ito-Euler pair ``(G, K)`` from ``G K = I``.

    Attributes
    ----------
    times : tuple of float
    drift : ndarray, shape (replicas, snapshots)
        Spectral norm ``||G_t K_t - I||`` per replica and snapshot.
    max_drift : float
        Maximum of ``drift`` over snapshots and replicas.
    mean_drift : float
        Replica average of the per-replica maximum over snapshots.
    mean_product_error : float
        ``||mean(G_t K_t) - I||`` at the last snapshot (bias of the pair in law).
    """

    times: tuple
    drift: np.ndarray = field(repr=False)
    max_drift: float
    mean_drift: float
    mean_product_error: float


def simulate_with_inverse_tracking(config: TrajectoryConfig, rng=None, replicas: int = 1,
                                   deterministic=()) -> Tuple[List[GlSample], DriftReport]:
    """Integrate G and the inverse equation ``dK = (-i sigma dZ - sigma^2 (lambda - tau) dt / 2) K``.

    Both are driven by the same increments with the Ito-Euler scheme.  The
    returned samples hold the solve-based inverses of G; the report measures
    how far the independently integrated K drifts from them.
    """
    if config.scheme != Scheme.ITO_EULER:
        raise ValueError("inverse tracking requires the ItoEuler scheme")
    rng = make_rng(config.seed, 0) if rng is None else rng
    snaps = _integrate(config, rng, int(replicas), inverse=True, track_k=True)
    eye = np.eye(config.n)
    drift = np.zeros((int(replicas), len(snaps)))
    mean_err = 0.0
    out = []
    for j, (g, k) in enumerate(snaps):
        prod = g @ k
        drift[:, j] = np.max(np.linalg.norm(prod - eye, ord=2, axis=(-2, -1)), axis=-1)
        mean_err = float(np.max(np.linalg.norm(prod.mean(axis=0) - eye, ord=2, axis=(-2, -1))))
        out.append((g, np.linalg.inv(g)))
    samples = _snapshot_samples(config, out, deterministic)
    per_rep = drift.max(axis=1) if drift.size else np.zeros(int(replicas))
    report = DriftReport(tuple(s.time for s in samples), drift, float(drift.max()) if drift.size else 0.0,
                         float(per_rep.mean()), mean_err)
    if replicas == 1:
        samples = [s.replica(0) for s in samples]
    return samples, report


def run_replicas(config: TrajectoryConfig, reps: int, statistic: Callable[[List[GlSample]], np.ndarray], *,
                 block_size: int = DEFAULT_BLOCK, workers: Optional[int] = None, inverse: bool = True,
                 deterministic=()) -> np.ndarray:
    """Apply ``statistic`` to ``reps`` replicas and concatenate the results.

    ``statistic`` receives the batched samples of one block (one per snapshot)
    and returns an array whose leading axis indexes the block's replicas.
    Blocks are reduced in index order whatever the number of workers.
    """
    reps = int(reps)
    if reps < 1:
        raise ValueError("reps must be positive")
    nblocks = -(-reps // block_size)

    def block(k):
        size = min(block_size, reps - k * block_size)
        snaps = _integrate(config, make_rng(config.seed, k), size, inverse)
        return np.asarray(statistic(_snapshot_samples(config, snaps, deterministic)))

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or nblocks == 1:
        parts = [block(k) for k in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block, range(nblocks)))
    return np.concatenate(parts, axis=0)


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def evaluate_word(word: Sequence[Letter], sample: GlSample) -> np.ndarray:
    """Ordered product of the matrices the letters stand for (identity for the empty word)."""
    if not word:
        shape = (sample.n, sample.n) if sample.batch_size is None else (sample.batch_size, sample.n, sample.n)
        return np.broadcast_to(np.eye(sample.n, dtype=complex), shape).copy()
    out = np.array(sample.letter_matrix(word[0]), copy=True)
    for letter in word[1:]:
        out = out @ sample.letter_matrix(letter)
    if sample.batch_size is not None and out.ndim == 2:
        out = np.broadcast_to(out, (sample.batch_size,) + out.shape).copy()
    return out


# Covariation data: dG^eps = alpha L dW R with (alpha / (i sigma), W, L, R)
# W is 0 for Z and 1 for Z*.
_DIFFERENTIAL = {
    Variant.ID: (1, 0, "G", "I"),
    Variant.STAR: (-1, 1, "I", "G*"),
    Variant.INV: (-1, 0, "I", "G^-1"),
    Variant.INV_STAR: (1, 1, "G^-1*", "I"),
}


def _kappa(params: ModelParams, w1: int, w2: int) -> complex:
    if w1 == w2 == 0:
        return params.lam - params.tau
    if w1 == w2 == 1:
        return params.lam - params.tau.conjugate()
    return complex(params.lam)


def bracket_template(eps1: Variant, eps2: Variant, params: ModelParams, g0: np.ndarray, v: np.ndarray,
                     sigma: float = 1.0) -> Tuple[complex, np.ndarray]:
    """Coefficient and matrix template of ``d<G^eps1, G^eps2> # V / dt`` at ``G = g0``.

    The covariation equals ``coefficient * template`` with
    ``template = L1 tr_N(R1 V L2) R2`` for ``dG^eps = alpha L dW R``.
    """
    n = g0.shape[-1]
    ginv = np.linalg.inv(g0)
    mats = {"I": np.eye(n, dtype=complex), "G": g0, "G*": _adj(g0), "G^-1": ginv, "G^-1*": _adj(ginv)}
    s1, w1, l1, r1 = _DIFFERENTIAL[Variant(eps1)]
    s2, w2, l2, r2 = _DIFFERENTIAL[Variant(eps2)]
    coef = -(s1 * s2) * sigma * sigma * _kappa(params, w1, w2)
    trace = np.trace(mats[r1] @ v @ mats[l2]) / n
    return complex(coef), mats[l1] @ mats[r2] * trace


@dataclass(frozen=True)
class BracketEstimate:
    """Fitted scalar in front of a covariation template.

    ``stderr`` carries the standard errors of the real and imaginary parts in
    its real and imaginary parts.
    """

    coefficient: complex
    stderr: complex
    expected: complex
    reps: int

    def z_score(self) -> float:
        """Largest standardised deviation of the two components."""
        d = self.coefficient - self.expected
        zr = abs(d.real) / self.stderr.real if self.stderr.real > 0 else (0.0 if d.real == 0 else math.inf)
        zi = abs(d.imag) / self.stderr.imag if self.stderr.imag > 0 else (0.0 if d.imag == 0 else math.inf)
        return max(zr, zi)


def estimate_bracket(eps1, eps2, params: ModelParams, n: int, dt: float, reps: int, rng, *,
                     sigma: Optional[float] = None, base: Optional[np.ndarray] = None,
                     v: Optional[np.ndarray] = None, chunk: int = 1000) -> BracketEstimate:
    """Monte-Carlo estimate of the covariation coefficient for one (eps1, eps2) cell.

    One Geometric step of length ``dt`` is taken from the base point ``G0``
    (left orientation).  Each replica yields ``Y = dG^eps1 V dG^eps2 / dt`` and
    the least-squares coefficient ``<T, Y> / <T, T>`` against the template
    ``T`` of :func:`bracket_template`; the estimate is the replica mean.

    ``base`` defaults to ``I + 0.3 W / sqrt(N)`` and ``v`` to ``W'``, with
    ``W, W'`` complex Ginibre matrices drawn from ``rng``.
    """
    eps1, eps2 = Variant(eps1), Variant(eps2)
    sigma = params.sigmas[0] if sigma is None else float(sigma)
    if base is None:
        base = np.eye(n) + 0.3 * _ginibre(rng, n) / math.sqrt(n)
    if v is None:
        v = _ginibre(rng, n)
    base = np.asarray(base, dtype=complex)
    v = np.asarray(v, dtype=complex)
    expected, tmpl = bracket_template(eps1, eps2, params, base, v, sigma)
    tnorm = np.vdot(tmpl, tmpl).real
    base_inv = np.linalg.inv(base)

    def variant(g, gi, eps):
        return (g, _adj(g), gi, _adj(gi))[eps]

    g0 = (base, _adj(base), base_inv, _adj(base_inv))
    draw = increment_sampler(params, sigma, n, dt)
    coefs = []
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        x = draw(rng, m)
        e, einv = kernels.expm_batch(x, inverse=True)
        g1 = base @ e
        g1inv = einv @ base_inv
        d1 = variant(g1, g1inv, eps1) - g0[eps1]
        d2 = variant(g1, g1inv, eps2) - g0[eps2]
        y = d1 @ v @ d2 / dt
        coefs.append(np.einsum("ij,bij->b", np.conj(tmpl), y) / tnorm)
        done += m
    c = np.concatenate(coefs)
    se = complex(np.std(c.real, ddof=1), np.std(c.imag, ddof=1)) / math.sqrt(len(c))
    return BracketEstimate(complex(c.mean()), se, expected, int(reps))


def _ginibre(rng, n):
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)


def read_matrix_file(path, n: Optional[int] = None) -> np.ndarray:
    """Read a square complex matrix.

    ``.npy`` files are loaded with numpy; any other file is text with one
    matrix row per line given as ``re im`` pairs.  Blank lines and lines
    starting with ``#`` are skipped.
    """
    path = os.fspath(path)
    if path.endswith(".npy"):
        a = np.asarray(np.load(path), dtype=complex)
    else:
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                vals = [float(tok) for tok in line.replace(",", " ").split()]
                if len(vals) % 2:
                    raise ValueError(f"{path}:{lineno}: odd number of values in a row of re/im pairs")
                rows.append([complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)])
        a = np.array(rows, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{path}: matrix of shape {a.shape} is not square")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{path}: matrix has size {a.shape[0]}, expected {n}")
    return a
