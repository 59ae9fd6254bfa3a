"""Model parameters and Gaussian increments of the rotated elliptic Brownian motion.

The driving noise is ``Z = exp(i theta) (a H + i b H~)`` with ``H, H~`` two
independent Hermitian Brownian motions normalised so that
``E[H_ij H_kl] = (t / N) delta_il delta_jk``.  Its law only depends on the
variance ``lambda = a^2 + b^2`` and covariance
``tau = lambda - exp(2 i theta) (a^2 - b^2)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, DegenerateError, ScaleError

__all__ = [
    "ModelParams",
    "HermitianIncrement",
    "EllipticIncrement",
    "validate_params",
    "params_from_abtheta",
    "sample_hermitian_increment",
    "sample_elliptic_increment",
    "hermitian_noise",
    "elliptic_noise",
    "make_rng",
]

# relative slack on the admissibility disk, absorbs round-off in (a, b, theta) -> (lambda, tau)
_DISK_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Parameter set of the multiplicative (lambda, tau)-Brownian motion.

    Attributes
    ----------
    lam : float
        Variance ``lambda >= 0``.
    tau : complex
        Covariance, ``|tau - lambda| <= lambda``.
    theta, a, b : float
        A representative ``(a, b, theta)`` of the law.
    sigmas : tuple of float
        One positive time scale per process; ``len(sigmas)`` is the arity p.
    """

    lam: float
    tau: complex
    theta: float
    a: float
    b: float
    sigmas: tuple = (1.0,)

    @property
    def p(self) -> int:
        return len(self.sigmas)

    @property
    def drift_rate(self) -> complex:
        """``lambda - tau``: the Ito drift of G is ``-sigma^2 (lambda - tau) / 2``."""
        return self.lam - self.tau

    def with_sigmas(self, sigmas) -> "ModelParams":
        return validate_params(self.lam, self.tau, sigmas)


def _check_sigmas(sigmas) -> tuple:
    sigmas = tuple(float(s) for s in sigmas)
    if not sigmas:
        raise ScaleError("at least one time scale sigma is required")
    for s in sigmas:
        if not s > 0 or not math.isfinite(s):
            raise ScaleError(f"time scale sigma must be positive, got {s!r}")
    return sigmas


def validate_params(lam, tau, sigmas=(1.0,)) -> ModelParams:
    """Solve ``(a, b, theta)`` from ``(lambda, tau)``.

    The canonical branch is ``theta = arg(lambda - tau) / 2`` in
    ``(-pi/2, pi/2]``, ``a^2 = (lambda + |lambda - tau|) / 2`` and
    ``b^2 = (lambda - |lambda - tau|) / 2``; ``theta = 0`` when ``tau == lambda``.

    Raises
    ------
    AdmissibilityError
        If ``lambda < 0`` or ``|tau - lambda| > lambda``.
    ScaleError
        If any sigma is not strictly positive.
    """
    lam = float(lam)
    tau = complex(tau)
    if lam < 0 or not math.isfinite(lam):
        raise AdmissibilityError(f"lambda must be nonnegative, got {lam!r}")
    gap = abs(lam - tau)
    if gap > lam * (1 + _DISK_RTOL):
        raise AdmissibilityError(
            f"|tau - lambda| = {gap:.6g} exceeds lambda = {lam:.6g}")
    sigmas = _check_sigmas(sigmas)
    gap = min(gap, lam)
    if gap == 0.0:
        theta = 0.0
    else:
        theta = cmath.phase(lam - tau) / 2
        if theta <= -math.pi / 2:
            theta += math.pi
    a = math.sqrt((lam + gap) / 2)
    b = math.sqrt(max(lam - gap, 0.0) / 2)
    if a == 0.0 and b == 0.0:
        raise DegenerateError("lambda = 0 gives a vanishing noise")
    return ModelParams(lam, tau, theta, a, b, sigmas)


def params_from_abtheta(a, b, theta, sigmas=(1.0,)) -> ModelParams:
    """Build parameters from the ``(a, b, theta)`` representation."""
    a, b, theta = float(a), float(b), float(theta)
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    if a == 0.0 and b == 0.0:
        raise DegenerateError("a and b are both zero")
    lam = a * a + b * b
    tau = lam - cmath.exp(2j * theta) * (a * a - b * b)
    return ModelParams(lam, tau, theta, a, b, _check_sigmas(sigmas))


def make_rng(seed, *key) -> np.random.Generator:
    """Independent generator for stream ``key`` of a seeded experiment."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def hermitian_noise(rng, n, dt, size=()) -> np.ndarray:
    """Hermitian Gaussian matrices of shape ``size + (n, n)``.

    Entries satisfy ``E|h_ij|^2 = dt / n``; the diagonal is real.  The
    construction is exactly Hermitian in floating point.
    """
    size = (int(size),) if np.isscalar(size) else tuple(size)
    r = rng.standard_normal(size + (n, n))
    rt = np.swapaxes(r, -1, -2)
    h = np.empty(size + (n, n), dtype=complex)
    h.real = (r + rt) * 0.5
    h.imag = (r - rt) * 0.5
    h *= math.sqrt(dt / n)
    return h


def elliptic_noise(params: ModelParams, rng, n, dt, size=()) -> np.ndarray:
    """Increments ``exp(i theta) (a dH + i b dH~)`` of shape ``size + (n, n)``."""
    z = None
    if params.a != 0.0:
        z = params.a * hermitian_noise(rng, n, dt, size)
    if params.b != 0.0:
        zb = (1j * params.b) * hermitian_noise(rng, n, dt, size)
        z = zb if z is None else z + zb
    if params.theta != 0.0:
        z *= cmath.exp(1j * params.theta)
    return z


@dataclass(frozen=True)
class HermitianIncrement:
    matrix: np.ndarray
    dt: float
    n: int


@dataclass(frozen=True)
class EllipticIncrement:
    matrix: np.ndarray
    dt: float
    n: int
    params: ModelParams


def _check_step(n, dt):
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")


def sample_hermitian_increment(n, dt, rng) -> HermitianIncrement:
    """One Hermitian Brownian increment over a step of length ``dt``."""
    _check_step(n, dt)
    return HermitianIncrement(hermitian_noise(rng, int(n), dt), float(dt), int(n))


def sample_elliptic_increment(params: ModelParams, n, dt, rng) -> EllipticIncrement:
    """One rotated elliptic increment over a step of length ``dt``."""
    _check_step(n, dt)
    return EllipticIncrement(elliptic_noise(params, rng, int(n), dt), float(dt), int(n), params)
