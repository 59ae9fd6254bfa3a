"""Spectral statistics of self-adjoint evaluations ``P P*``.

Contents: evaluation of ``P P*`` on simulated samples, Hermitian spectra,
smooth test functions (bumps, mollified indicators, sampled tables), the
Helffer-Sjostrand representation of ``tr_N f(H)``, and three scans: variance
of linear statistics against ``N``, the exact ``1/N^2`` gap of moments, and an
empirical spectrum-inclusion check.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy import integrate, stats
from scipy.interpolate import CubicHermiteSpline

from .errors import ToleranceError
from .generator import build_generator, expectation_trace
from .model import ModelParams
from .sde import Scheme, TrajectoryConfig, run_replicas, simulate_batch, evaluate_word
from .tracepoly import MatrixPolynomial, TracePolynomial, parse_matrix_polynomial
from .words import Variant

__all__ = [
    "HERMITIAN_TOL",
    "HS_ORDER",
    "SelfAdjointPoly",
    "SpectralSample",
    "SmoothFunction",
    "bump",
    "mollifier",
    "build_mollified_indicator",
    "function_from_table",
    "smooth_function",
    "chi",
    "eval_pp_star",
    "empirical_spectrum",
    "HSResult",
    "hs_trace",
    "linear_statistic_samples",
    "VarianceScan",
    "variance_scan",
    "ConvergenceScan",
    "weak_convergence_scan",
    "InclusionReport",
    "spectrum_inclusion_check",
    "sign_matrix",
]

HERMITIAN_TOL = 1e-10
HS_ORDER = 3


# ---------------------------------------------------------------- polynomials and spectra

@dataclass(frozen=True)
class SelfAdjointPoly:
    """Matrix polynomial ``P``; the Hermitian target is ``P P*``."""

    poly: MatrixPolynomial
    name: str = ""

    @classmethod
    def from_text(cls, text: str, name: Optional[str] = None) -> "SelfAdjointPoly":
        return cls(parse_matrix_polynomial(text), text if name is None else name)

    @property
    def arity(self) -> int:
        return self.poly.arity

    @property
    def det_count(self) -> int:
        return self.poly.det_count

    @property
    def needs_inverse(self) -> bool:
        return any(l.variant >= Variant.INV for l in self.poly.letters() if not l.det)


def eval_pp_star(poly: SelfAdjointPoly, sample) -> np.ndarray:
    """``(M M* + (M M*)*) / 2`` with ``M = P(sample)``; batched samples give a stack."""
    if poly.arity > sample.p:
        raise ValueError(f"polynomial uses {poly.arity} processes, sample has {sample.p}")
    n = sample.n
    shape = (n, n) if sample.batch_size is None else (sample.batch_size, n, n)
    m = np.zeros(shape, dtype=complex)
    for w, c in poly.poly.items():
        m = m + c * evaluate_word(w, sample)
    h = m @ np.conj(np.swapaxes(m, -1, -2))
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


@dataclass(frozen=True)
class SpectralSample:
    eigenvalues: np.ndarray
    n: int
    t: Optional[float] = None
    seed: Optional[int] = None
    poly_id: str = ""


def empirical_spectrum(h: np.ndarray, t: Optional[float] = None, seed: Optional[int] = None,
                       poly_id: str = "") -> SpectralSample:
    """Sorted eigenvalues of a Hermitian matrix.

    Raises
    ------
    ValueError
        If ``h`` departs from Hermitian by more than ``HERMITIAN_TOL`` (relative).
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(h).max(initial=0.0)))
    if np.abs(h - np.conj(h.T)).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    ev = np.linalg.eigvalsh(h)
    return SpectralSample(np.sort(ev), h.shape[0], t, seed, poly_id)


# ---------------------------------------------------------------- smooth functions

class SmoothFunction:
    """Compactly supported function with derivatives.

    Parameters
    ----------
    derivative : callable ``(x, m) -> f^(m)(x)``
        Vectorised in ``x``; must vanish outside ``support``.
    support : (float, float)
        Closed interval containing the support.
    smoothness : int or math.inf
        Highest derivative order ``derivative`` accepts.
    name : str
    scale : float, optional
        Shortest length on which ``f`` varies; quadratures resolve it.
        Defaults to the support length.
    """

    def __init__(self, derivative: Callable[[np.ndarray, int], np.ndarray], support: Tuple[float, float],
                 smoothness=math.inf, name: str = "", scale: Optional[float] = None):
        lo, hi = float(support[0]), float(support[1])
        if not lo < hi:
            raise ValueError("support must be a nondegenerate interval")
        self._derivative = derivative
        self.support = (lo, hi)
        self.scale = hi - lo if scale is None else min(float(scale), hi - lo)
        self.smoothness = smoothness
        self.name = name

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, m: int):
        if m > self.smoothness:
            raise ValueError(f"{self.name or 'function'} has only {self.smoothness} derivatives")
        x = np.asarray(x, dtype=float)
        return self._derivative(x, int(m))

    def __repr__(self):
        return f"SmoothFunction({self.name}, support={self.support})"


@functools.lru_cache(maxsize=None)
def _bump_poly(m: int) -> Polynomial:
    """``p_m`` with ``d^m/du^m exp(-1/(1-u^2)) = p_m(u) exp(-1/(1-u^2)) / (1-u^2)^(2m)``."""
    if m == 0:
        return Polynomial([1.0])
    prev = _bump_poly(m - 1)
    one_minus = Polynomial([1.0, 0.0, -1.0])
    u = Polynomial([0.0, 1.0])
    k = m - 1
    return prev.deriv() * one_minus ** 2 - 2 * u * prev + 4 * k * u * one_minus * prev


def _bump_derivative(u: np.ndarray, m: int) -> np.ndarray:
    """``m``-th derivative of ``exp(-1/(1-u^2))`` (zero for ``|u| >= 1``)."""
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1
    if np.any(inside):
        ui = u[inside]
        s = 1.0 - ui * ui
        with np.errstate(under="ignore"):
            out[inside] = _bump_poly(m)(ui) * np.exp(-1.0 / s) / s ** (2 * m)
    return out


def bump(center: float = 0.0, width: float = 1.0, height: float = 1.0) -> SmoothFunction:
    """``height * exp(-1 / (1 - ((x - center)/width)^2))`` on ``|x - center| < width``."""
    if not width > 0:
        raise ValueError("width must be positive")

    def der(x, m):
        return height * _bump_derivative((x - center) / width, m) / width ** m

    return SmoothFunction(der, (center - width, center + width), math.inf,
                          f"bump(center={center:g}, width={width:g}, height={height:g})")


@functools.lru_cache(maxsize=None)
def _bump_mass() -> float:
    val, _ = integrate.quad(lambda u: math.exp(-1.0 / (1.0 - u * u)), -1, 1, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


_GL_X, _GL_W = leggauss(64)


def _mollifier_cdf(u: np.ndarray) -> np.ndarray:
    """``R(u) = int_{-1}^u rho``, exactly 0 below -1 and 1 above 1."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1, 1.0, 0.0)
    inside = np.abs(u) < 1
    if np.any(inside):
        ui = u[inside][:, None]
        half = (ui + 1) / 2
        nodes = -1 + half * (_GL_X + 1)
        vals = _bump_derivative(nodes, 0)
        out[inside] = (vals * _GL_W).sum(axis=1) * half[:, 0] / _bump_mass()
    return out


def mollifier() -> SmoothFunction:
    """The normalised bump ``rho`` on ``[-1, 1]`` with unit integral."""
    c = 1.0 / _bump_mass()

    def der(x, m):
        return c * _bump_derivative(x, m)

    return SmoothFunction(der, (-1.0, 1.0), math.inf, "mollifier")


def _merge_intervals(intervals, pad: float = 0.0) -> List[Tuple[float, float]]:
    ivs = sorted((float(a) - pad, float(b) + pad) for a, b in intervals)
    merged: List[Tuple[float, float]] = []
    for a, b in ivs:
        if a > b:
            raise ValueError(f"interval ({a}, {b}) is reversed")
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def build_mollified_indicator(support, delta: float) -> SmoothFunction:
    """Indicator of the ``delta``-fattening ``K`` of ``support`` convolved with ``rho_{delta/2}``.

    ``support`` is an interval ``(a, b)`` or a list of intervals.  The result
    equals 1 on the ``delta/2``-fattening of ``support``, vanishes off its
    ``3 delta / 2``-fattening and takes values in ``[0, 1]``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if len(support) == 2 and all(np.isscalar(v) for v in support):
        support = [support]
    if not support:
        raise ValueError("support must contain at least one interval")
    k = _merge_intervals(support, pad=delta)
    h = delta / 2
    c = 1.0 / _bump_mass()

    def der(x, m):
        out = np.zeros_like(x, dtype=float)
        for a, b in k:
            if m == 0:
                out += _mollifier_cdf((x - a) / h) - _mollifier_cdf((x - b) / h)
            else:
                scale = c / h ** m
                out += scale * (_bump_derivative((x - a) / h, m - 1) - _bump_derivative((x - b) / h, m - 1))
        # the quadrature behind R is accurate to ~1e-12; keep the values inside [0, 1] exactly
        return np.clip(out, 0.0, 1.0) if m == 0 else out

    desc = ", ".join(f"[{a:g}, {b:g}]" for a, b in _merge_intervals(support))
    return SmoothFunction(der, (k[0][0] - h, k[-1][1] + h), math.inf,
                          f"mollified-indicator({desc}; delta={delta:g})", scale=2 * h)


def function_from_table(x, columns, name: str = "table") -> SmoothFunction:
    """Function given by samples of ``f, f', ..., f^(k+1)`` on an increasing grid.

    Derivative ``m <= k`` is the cubic Hermite interpolant of column ``m`` with
    slopes from column ``m + 1``; the last column is interpolated linearly.
    Values outside the grid are 0.
    """
    x = np.asarray(x, dtype=float)
    cols = np.asarray(columns, dtype=float)
    if cols.ndim != 2 or cols.shape[0] != x.size or cols.shape[1] < 2:
        raise ValueError("columns must have shape (len(x), k + 2) with k >= 0")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    top = cols.shape[1] - 1
    splines = [CubicHermiteSpline(x, cols[:, m], cols[:, m + 1], extrapolate=False) for m in range(top)]

    def der(xx, m):
        if m == top:
            return np.interp(xx, x, cols[:, top], left=0.0, right=0.0)
        return np.nan_to_num(splines[m](xx), nan=0.0)

    return SmoothFunction(der, (x[0], x[-1]), top, name, scale=16 * float(np.min(np.diff(x))))


def smooth_function(options) -> SmoothFunction:
    """Build a function from a config mapping.

    ``{"kind": "bump", "center": c, "width": w, "height": h}``,
    ``{"kind": "mollified-indicator", "support": [[a, b], ...], "delta": d}`` or
    ``{"kind": "table", "path": file}`` where the file has columns ``x f f' ...``.
    """
    kind = options.get("kind")
    if kind == "bump":
        return bump(options.get("center", 0.0), options.get("width", 1.0), options.get("height", 1.0))
    if kind == "mollified-indicator":
        return build_mollified_indicator(options["support"], options["delta"])
    if kind == "table":
        data = np.loadtxt(options["path"], ndmin=2)
        return function_from_table(data[:, 0], data[:, 1:], options.get("name", options["path"]))
    raise ValueError(f"unknown function kind {kind!r}")


# ---------------------------------------------------------------- Helffer-Sjostrand

def _smoothstep(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1, 1.0, 0.0)
    mid = (s > 0) & (s < 1)
    if np.any(mid):
        a = np.exp(-1.0 / s[mid])
        b = np.exp(-1.0 / (1.0 - s[mid]))
        out[mid] = a / (a + b)
    return out


def _smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0) & (s < 1)
    if np.any(mid):
        sm = s[mid]
        a = np.exp(-1.0 / sm)
        b = np.exp(-1.0 / (1.0 - sm))
        da = a / sm ** 2
        db = -b / (1.0 - sm) ** 2
        out[mid] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


def chi(y, derivative: bool = False):
    """Cutoff: 1 for ``|y| <= 1/2``, 0 for ``|y| >= 1``, smooth and even."""
    y = np.asarray(y, dtype=float)
    s = 2.0 * (1.0 - np.abs(y))
    if not derivative:
        return _smoothstep(s)
    return -2.0 * np.sign(y) * _smoothstep_prime(s)


def _dbar_extension(f: SmoothFunction, k: int, x: np.ndarray, y: float, derivs) -> np.ndarray:
    """``dbar F_k(f)(x + i y)`` from precomputed ``derivs[l] = f^(l)(x)``."""
    iy = 1j * y
    c = float(chi(y))
    cp = float(chi(y, derivative=True))
    out = 0.5 * iy ** k / math.factorial(k) * derivs[k + 1] * c
    if cp != 0.0:
        acc = np.zeros_like(x, dtype=complex)
        for l in range(k + 1):
            acc += iy ** l / math.factorial(l) * derivs[l]
        out = out + 0.5j * acc * cp
    return out


@dataclass(frozen=True)
class HSResult:
    """Helffer-Sjostrand evaluation of ``tr_N f(H)``.

    Attributes
    ----------
    value : float
        The planar integral.  The integrand over ``y < 0`` is the conjugate
        of the one over ``y > 0``, so the value is real by construction.
    direct : float
        ``tr_N f(H)`` from the eigenvalues.
    error_estimate : float
        Difference between the two finest quadrature resolutions plus the
        bound on the discarded strip near the real axis.
    """

    value: float
    direct: float
    error_estimate: float


def _hs_quadrature(f, k, mu, nodes, ymin, xwidth):
    """Planar integral over ``y > 0``; the lower half plane contributes the conjugate."""
    lo, hi = f.support
    gx, wx = leggauss(nodes)
    # y panels: [1/2, 1] carries chi', then dyadic panels down to ymin
    panels = [(0.5, 1.0)]
    y1 = 0.5
    while y1 > ymin:
        y0 = max(y1 / 2, ymin)
        panels.append((y0, y1))
        y1 = y0
    base = np.linspace(lo, hi, max(2, int(math.ceil((hi - lo) / xwidth)) + 1))
    graded = np.array([-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0])
    total = 0.0
    for (y0, y1) in panels:
        ys = y0 + (gx + 1) * (y1 - y0) / 2
        wys = wx * (y1 - y0) / 2
        bps = base
        if y1 < 2 * xwidth:
            # the resolvent varies on the scale y near each eigenvalue
            local = (mu[:, None] + y1 * graded).ravel()
            bps = np.unique(np.concatenate([base, np.clip(local, lo, hi)]))
        a, b = bps[:-1], bps[1:]
        xs = (a[:, None] + (gx + 1) * (b - a)[:, None] / 2).ravel()
        wxs = (wx * (b - a)[:, None] / 2).ravel()
        derivs = [f.derivative(xs, l) for l in range(k + 2)]
        keep = np.any(np.stack(derivs) != 0, axis=0)
        xs, wxs, derivs = xs[keep], wxs[keep], [d[keep] for d in derivs]
        if xs.size == 0:
            continue
        for y, w in zip(ys, wys):
            g = _dbar_extension(f, k, xs, y, derivs)
            z = xs + 1j * y
            res = np.zeros_like(z)
            for start in range(0, mu.size, 16):
                res += (1.0 / (mu[start:start + 16, None] - z[None, :])).sum(axis=0)
            total += 2.0 * w * float(np.dot(wxs, (g * res).real)) / mu.size
    return total / math.pi


def hs_trace(f: SmoothFunction, k: int, h, *, tol: float = 1e-6, max_refinements: int = 4) -> HSResult:
    """``tr_N f(H)`` through the Helffer-Sjostrand formula with the order-``k`` extension.

    The planar integral runs over ``support(f) x [-1, 1]`` with tensor
    Gauss-Legendre rules: dyadic panels in ``y`` toward the real axis and
    ``x`` panels refined around every eigenvalue at the panel's ``y`` scale.
    The strip ``|y| < ymin`` is dropped, with ``ymin`` chosen so that its
    contribution, at most ``ymin^k / (pi k k!) ||f^(k+1)||_1``, stays below
    ``tol / 10``.  Resolution is doubled until two successive values agree to
    ``tol``.

    Raises
    ------
    ToleranceError
        If the quadrature does not converge within ``max_refinements`` doublings.
    """
    if f.smoothness < k + 1:
        raise ValueError(f"need a C^{k + 1} function, {f.name} has {f.smoothness} derivatives")
    h = np.asarray(h)
    if h.ndim == 0:
        h = h.reshape(1, 1)
    mu = empirical_spectrum(h).eigenvalues.astype(float)
    direct = float(np.mean(f(mu)))
    lo, hi = f.support
    grid = np.linspace(lo, hi, 4001)
    l1 = float(integrate.trapezoid(np.abs(f.derivative(grid, k + 1)), grid))
    ymin = 0.5
    while ymin > 1e-12 and ymin ** k / (math.pi * k * math.factorial(k)) * l1 > tol / 10:
        ymin /= 2
    strip = ymin ** k / (math.pi * k * math.factorial(k)) * l1
    xwidth = min(hi - lo, 2 * f.scale) / 16
    nodes = 8
    prev = _hs_quadrature(f, k, mu, nodes, ymin, xwidth)
    diff = math.inf
    for _ in range(max_refinements):
        nodes += 4
        xwidth /= 2
        cur = _hs_quadrature(f, k, mu, nodes, ymin, xwidth)
        diff = abs(cur - prev)
        if diff <= tol:
            return HSResult(float(cur), direct, float(diff + strip))
        prev = cur
    raise ToleranceError(f"Helffer-Sjostrand quadrature did not converge (last change {diff:.3g} > {tol:g})")


# ---------------------------------------------------------------- scans

def sign_matrix(n: int) -> np.ndarray:
    """``diag(1, ..., 1, -1, ..., -1)`` with ``ceil(n/2)`` plus signs."""
    d = np.ones(n)
    d[(n + 1) // 2:] = -1.0
    return np.diag(d).astype(complex)


def _fit_loglog(xs, ys, weights=None):
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    res = stats.linregress(lx, ly)
    return res


@dataclass(frozen=True)
class VarianceScan:
    """Monte-Carlo variance of ``tr_N f(P P*)`` against ``N``.

    ``slope_ci`` is a 95% interval from the least-squares fit of
    ``log Var`` on ``log N`` (Student t with ``len(n_list) - 2`` degrees of
    freedom).  ``slope`` is NaN when a variance is exactly zero.
    """

    n_list: Tuple[int, ...]
    variances: Tuple[float, ...]
    variance_se: Tuple[float, ...]
    means: Tuple[float, ...]
    slope: float
    slope_stderr: float
    slope_ci: Tuple[float, float]
    intercept: float
    reps: int


def _variance_se(x: np.ndarray) -> float:
    n = x.size
    d = x - x.mean()
    m2 = float(np.mean(d ** 2))
    m4 = float(np.mean(d ** 4))
    return math.sqrt(max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n)


def linear_statistic_samples(poly: SelfAdjointPoly, f: SmoothFunction, params: ModelParams, t: float, n: int,
                             reps: int, seed: int, *, dt: Optional[float] = None,
                             scheme: Scheme = Scheme.GEOMETRIC, workers: Optional[int] = None,
                             deterministic: Optional[Callable[[int], Sequence[np.ndarray]]] = None,
                             block_size: int = 64) -> np.ndarray:
    """Per-replica ``tr_N f(P P*(G_t))`` at size ``n`` (seed offset by ``n`` for independence)."""
    cfg = TrajectoryConfig(n, params, t, dt=dt, scheme=scheme, seed=_stream_seed(seed, n))
    dets = tuple(deterministic(n)) if deterministic else ()

    def stat(samples):
        hh = eval_pp_star(poly, samples[-1])
        ev = np.linalg.eigvalsh(hh)
        return f(ev).mean(axis=-1)

    return run_replicas(cfg, reps, stat, workers=workers, inverse=poly.needs_inverse, deterministic=dets,
                        block_size=block_size)


def _stream_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(n)]).generate_state(1, dtype=np.uint64)[0])


def variance_scan(poly: SelfAdjointPoly, f: SmoothFunction, params: ModelParams, t: float, n_list: Sequence[int],
                  reps: int, seed: int, **kwargs) -> VarianceScan:
    """Fit ``log Var[tr_N f(P P*)]`` against ``log N`` (keyword options as in ``linear_statistic_samples``)."""
    if len(n_list) < 3:
        raise ValueError("at least three sizes are needed for a slope with an interval")
    if reps < 2:
        raise ValueError("reps must be at least 2")
    variances, ses, means = [], [], []
    for n in n_list:
        x = linear_statistic_samples(poly, f, params, t, n, reps, seed, **kwargs)
        variances.append(float(np.var(x, ddof=1)))
        ses.append(_variance_se(x))
        means.append(float(np.mean(x)))
    if min(variances) <= 0:
        nan = float("nan")
        return VarianceScan(tuple(n_list), tuple(variances), tuple(ses), tuple(means), nan, nan, (nan, nan), nan,
                            int(reps))
    fit = _fit_loglog(n_list, variances)
    q = stats.t.ppf(0.975, len(n_list) - 2)
    return VarianceScan(tuple(n_list), tuple(variances), tuple(ses), tuple(means), float(fit.slope),
                        float(fit.stderr), (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr)),
                        float(fit.intercept), int(reps))


@dataclass(frozen=True)
class ConvergenceScan:
    """Gap ``|E[P(G_t)] - free value|`` against ``N`` from the exact engines.

    ``slope`` is NaN (and ``degenerate`` true) when every gap is below
    ``zero_tol``: the finite-N moments then coincide with the free one.
    """

    n_list: Tuple[int, ...]
    gaps: Tuple[float, ...]
    finite_values: Tuple[complex, ...]
    free_value: complex
    slope: float
    intercept: float
    degenerate: bool


def weak_convergence_scan(poly: TracePolynomial, t: float, params: ModelParams, n_list: Sequence[int],
                          d: Optional[int] = None, sigmas=None, zero_tol: float = 1e-13) -> ConvergenceScan:
    """Exact ``1/N^2`` gap between finite-N and free moments (no Monte Carlo)."""
    sig = tuple(params.sigmas if sigmas is None else sigmas)
    p = max(poly.arity, len(sig))
    if len(sig) != p:
        raise ValueError("polynomial arity exceeds the number of time scales")
    d = poly.degree if d is None else int(d)
    free = expectation_trace(poly, t, build_generator(p, d, params, sig, n=math.inf))
    finite = [expectation_trace(poly, t, build_generator(p, d, params, sig, n=n)) for n in n_list]
    gaps = [abs(v - free) for v in finite]
    if max(gaps, default=0.0) <= zero_tol:
        return ConvergenceScan(tuple(n_list), tuple(gaps), tuple(finite), free, float("nan"), float("nan"), True)
    if min(gaps) <= 0:
        return ConvergenceScan(tuple(n_list), tuple(gaps), tuple(finite), free, float("nan"), float("nan"), False)
    fit = _fit_loglog(n_list, gaps)
    return ConvergenceScan(tuple(n_list), tuple(gaps), tuple(finite), free, float(fit.slope), float(fit.intercept),
                           False)


@dataclass(frozen=True)
class InclusionReport:
    """Small-N spectra against an empirical large-N reference support.

    ``reference`` is the union over reference trials of the eigenvalue range
    ``[min mu - delta/2, max mu + delta/2]`` of each trial (merged).  An eigenvalue of a
    small-N trial is an outlier when its distance to ``reference`` exceeds
    ``delta``; ``max_excess`` is the largest such distance (0 if all inside).
    """

    reference: Tuple[Tuple[float, float], ...]
    outlier_fraction: float
    outliers: int
    total: int
    max_excess: float
    max_distance: float
    n_small: int
    n_ref: int
    delta: float
    trials: int


def _distance_to_union(x: np.ndarray, ivs: Sequence[Tuple[float, float]]) -> np.ndarray:
    a = np.array([iv[0] for iv in ivs])
    b = np.array([iv[1] for iv in ivs])
    d = np.maximum(a[None, :] - x[:, None], x[:, None] - b[None, :])
    return np.maximum(d.min(axis=1), 0.0)


def _spectra(poly, params, t, n, trials, seed, dt, deterministic, workers):
    cfg = TrajectoryConfig(n, params, t, dt=dt, seed=_stream_seed(seed, n))
    dets = tuple(deterministic(n)) if deterministic else ()

    def stat(samples):
        return np.linalg.eigvalsh(eval_pp_star(poly, samples[-1]))

    return run_replicas(cfg, trials, stat, workers=workers, inverse=poly.needs_inverse, deterministic=dets,
                        block_size=4)


def spectrum_inclusion_check(poly: SelfAdjointPoly, params: ModelParams, t: float, n_small: int, n_ref: int,
                             delta: float, trials: int, seed: int, *, ref_trials: Optional[int] = None,
                             dt: Optional[float] = None,
                             deterministic: Optional[Callable[[int], Sequence[np.ndarray]]] = None,
                             workers: Optional[int] = None) -> InclusionReport:
    """Fraction of small-N eigenvalues farther than ``delta`` from the large-N reference support."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ref_trials = trials if ref_trials is None else int(ref_trials)
    ref = _spectra(poly, params, t, n_ref, ref_trials, seed, dt, deterministic, workers)
    ranges = [(row.min(), row.max()) for row in ref]
    ivs = _merge_intervals(ranges, pad=delta / 2) if math.isfinite(delta) else [(-math.inf, math.inf)]
    small = _spectra(poly, params, t, n_small, trials, seed, dt, deterministic, workers).ravel()
    dist = _distance_to_union(small, ivs) if math.isfinite(delta) else np.zeros_like(small)
    out = dist > delta
    excess = float(np.max(dist - delta, initial=0.0)) if out.any() else 0.0
    return InclusionReport(tuple(ivs), float(out.mean()), int(out.sum()), int(small.size), max(excess, 0.0),
                           float(dist.max(initial=0.0)), int(n_small), int(n_ref), float(delta), int(trials))
