"""Command-line front end: ``gltau <kind> --config FILE [options]``.

The configuration is one JSON file.  Flags override the matching config
fields.  Every run writes ``<output_dir>/<kind>-<timestamp>/`` holding
``manifest.json`` and comma-separated result tables; identical config and
seed give byte-identical tables.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 resource
error.  Failures print one JSON line ``{"status": "error", ...}`` on stderr.

Configuration fields
--------------------
kind : str
    One of ``KINDS`` (the positional argument wins if both are given).
model : dict
    Either ``{"lambda": l, "tau": t}`` or ``{"a": a, "b": b, "theta": th}``,
    plus optional ``"sigmas": [s1, ...]``.  Complex values are written as
    ``[re, im]``, a number, or a string such as ``"0.5+0.3j"``.
sizes : dict
    ``N`` (int or list; ``"inf"`` allowed for exact kinds), ``p``, ``d``,
    ``dt``, ``t`` (number or list).
polynomial : str
    Trace polynomial (simulate, moments, compare, convergence-scan) or matrix
    polynomial ``P`` (variance-scan, spectrum-check, hs-check).
replicas, seed, output_dir, workers
    Monte-Carlo size, base seed, output root and worker threads.
function : dict
    Test function for variance-scan and hs-check (see ``smooth_function``).
deterministic : list
    Matrix files for ``a1, a2, ...`` or the string ``"signs"`` for
    ``diag(+-1)``.
scheme, orientation : str
    Integrator options for Monte-Carlo kinds.
delta, n_small, n_ref, trials, ref_trials
    Spectrum-check options.
cells : list of [eps1, eps2]
    Bracket-check cells (default: all 16), with variants ``"X"``, ``"X*"``,
    ``"X^-1"``, ``"X^-1*"``.
save_matrices : bool
    simulate only: also write each snapshot as a text matrix file.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import kernels
from .errors import (ClosureError, GltauError, ResourceError, SingularityError, ToleranceError,
                     TraceSyntaxError)
from .generator import BASIS_CAP, build_generator, expectation_trace, predicted_dimension
from .model import ModelParams, make_rng, params_from_abtheta, validate_params
from .sde import (Orientation, Scheme, TrajectoryConfig, estimate_bracket, read_matrix_file, run_replicas,
                  simulate_batch)
from .spectral import (SelfAdjointPoly, eval_pp_star, hs_trace, sign_matrix, smooth_function,
                       spectrum_inclusion_check, variance_scan, weak_convergence_scan, HS_ORDER)
from .tracepoly import TracePolynomial, evaluate_on_sample, parse_trace_polynomial
from .words import Variant

__all__ = ["KINDS", "ConfigError", "ExperimentConfig", "RunManifest", "load_config", "run", "main"]

KINDS = ("simulate", "moments", "compare", "variance-scan", "convergence-scan", "spectrum-check", "hs-check",
         "bracket-check")
DEFAULT_OUT = "gltau-runs"
EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 2, 3, 4

_VARIANT_NAMES = {"X": Variant.ID, "X*": Variant.STAR, "X^-1": Variant.INV, "X^-1*": Variant.INV_STAR}


class ConfigError(GltauError, ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------- configuration

def _complex(v, what: str) -> complex:
    try:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, str):
            return complex(v.replace(" ", "").replace("i", "j"))
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: cannot read {v!r} as a complex number") from None


def _list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _size(v, allow_inf: bool) -> float:
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        if not allow_inf:
            raise ConfigError("N = inf is only meaningful for exact kinds")
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < 1:
        raise ConfigError(f"sizes.N: expected positive integers, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see the module docstring for fields)."""

    kind: str
    params: ModelParams
    n_list: Tuple[float, ...]
    times: Tuple[float, ...]
    p: int
    d: Optional[int]
    dt: Optional[float]
    polynomial: str
    replicas: int
    seed: int
    output_dir: str
    workers: Optional[int]
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)

    def option(self, key, default=None):
        return self.raw.get(key, default)


def _fold(text) -> str:
    return str(text).replace("-", "").replace("_", "").lower()


def _enum_member(key: str, enum_type, value):
    """Match ``"ItoEuler"``, ``"ito-euler"`` or ``"ITO_EULER"`` to a member."""
    for member in enum_type:
        if _fold(value) in (_fold(member.value), _fold(member.name)):
            return member
    raise ConfigError(f"{key}: unknown value {value!r} (expected one of {', '.join(m.value for m in enum_type)})")


def load_config(data: Dict[str, Any], kind: Optional[str] = None, seed: Optional[int] = None,
                out: Optional[str] = None, workers: Optional[int] = None,
                base_dir: str = ".") -> ExperimentConfig:
    """Validate a config mapping; keyword arguments are flag overrides."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(data)
    k = kind or raw.get("kind")
    if k not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}; got {k!r}")
    if kind and raw.get("kind") not in (None, kind):
        raw["kind_in_file"] = raw["kind"]
    raw["kind"] = k

    model = raw.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model: expected an object")
    sigmas = tuple(float(s) for s in _list(model.get("sigmas", [1.0])))
    has_lt = "lambda" in model or "tau" in model
    has_abt = any(key in model for key in ("a", "b", "theta"))
    if has_lt == has_abt:
        raise ConfigError("model: give exactly one of (lambda, tau) or (a, b, theta)")
    try:
        if has_lt:
            params = validate_params(float(model["lambda"]), _complex(model["tau"], "model.tau"), sigmas)
        else:
            params = params_from_abtheta(model["a"], model["b"], model.get("theta", 0.0), sigmas)
    except KeyError as exc:
        raise ConfigError(f"model: missing {exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None

    sizes = raw.get("sizes", {})
    if not isinstance(sizes, dict):
        raise ConfigError("sizes: expected an object")
    exact = k in ("moments", "convergence-scan")
    n_list = tuple(_size(v, exact) for v in _list(sizes.get("N", [])))
    times = tuple(float(t) for t in _list(sizes.get("t", [1.0])))
    if any(not (t >= 0 and math.isfinite(t)) for t in times):
        raise ConfigError("sizes.t: times must be finite and nonnegative")
    p = int(sizes.get("p", params.p))
    if p != params.p:
        raise ConfigError(f"sizes.p = {p} but {params.p} time scales given")
    d = sizes.get("d")
    d = None if d is None else int(d)
    dt = sizes.get("dt")
    dt = None if dt is None else float(dt)
    if dt is not None and not dt > 0:
        raise ConfigError("sizes.dt must be positive")
    if k not in ("bracket-check",) and not n_list:
        raise ConfigError("sizes.N: at least one size is required")

    poly = raw.get("polynomial", "")
    if k not in ("bracket-check",) and not isinstance(poly, str) or (k != "bracket-check" and not poly):
        raise ConfigError("polynomial: expected a nonempty string")
    reps = int(raw.get("replicas", 1000))
    if reps < 1:
        raise ConfigError("replicas must be positive")
    seed_v = int(seed if seed is not None else raw.get("seed", 0))
    out_dir = out or raw.get("output_dir") or os.environ.get("GLTAU_OUT") or DEFAULT_OUT
    w = workers if workers is not None else raw.get("workers")
    w = None if w is None else int(w)
    if w is not None and w < 1:
        raise ConfigError("workers must be positive")

    dets = raw.get("deterministic")
    if isinstance(dets, list):
        resolved = []
        for path in dets:
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(full):
                raise ConfigError(f"deterministic: file {path!r} does not exist")
            resolved.append(full)
        raw["deterministic"] = resolved
    elif dets not in (None, "signs"):
        raise ConfigError("deterministic: expected a list of matrix files or \"signs\"")
    for key, enum_type in (("scheme", Scheme), ("orientation", Orientation)):
        if key in raw:
            raw[key] = _enum_member(key, enum_type, raw[key])

    cfg = ExperimentConfig(k, params, n_list, times, p, d, dt, poly if isinstance(poly, str) else "",
                           reps, seed_v, str(out_dir), w, raw)
    _parse_polynomial(cfg)  # surface syntax errors as config errors
    return cfg


def _parse_polynomial(cfg: ExperimentConfig):
    if cfg.kind == "bracket-check":
        return None
    try:
        if cfg.kind in ("variance-scan", "spectrum-check", "hs-check"):
            return SelfAdjointPoly.from_text(cfg.polynomial)
        return parse_trace_polynomial(cfg.polynomial)
    except TraceSyntaxError as exc:
        raise ConfigError(f"polynomial: {exc}") from None


def _deterministic(cfg: ExperimentConfig):
    dets = cfg.option("deterministic")
    if dets is None:
        return None
    if dets == "signs":
        return lambda n: [sign_matrix(n)]
    mats = [read_matrix_file(path) for path in dets]

    def factory(n):
        for path, m in zip(dets, mats):
            if m.shape[0] != n:
                raise ConfigError(f"deterministic matrix {os.path.basename(path)} is {m.shape[0]}x{m.shape[0]}, "
                                  f"run needs N = {n}")
        return mats

    return factory


# ---------------------------------------------------------------- tables

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def _table(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _n_value(n) -> Any:
    return "inf" if isinstance(n, float) and math.isinf(n) else int(n)


# ---------------------------------------------------------------- pipelines

def _dry_run(cfg: ExperimentConfig) -> Dict[str, Any]:
    pred: Dict[str, Any] = {"kind": cfg.kind, "N": [_n_value(n) for n in cfg.n_list], "t": list(cfg.times)}
    if cfg.kind in ("moments", "compare", "convergence-scan"):
        poly = _parse_polynomial(cfg)
        d = cfg.d if cfg.d is not None else poly.degree
        dim = predicted_dimension(cfg.p, d)
        pred.update(p=cfg.p, d=d, basis_dimension=dim, basis_cap=BASIS_CAP, fits=dim <= BASIS_CAP)
    if cfg.kind in ("simulate", "compare", "variance-scan", "hs-check"):
        finite = [n for n in cfg.n_list if math.isfinite(n)]
        pred["replica_count"] = cfg.replicas * len(finite)
        steps = [TrajectoryConfig(int(n), cfg.params, max(cfg.times), dt=cfg.dt).steps for n in finite]
        pred["replica_steps"] = cfg.replicas * sum(steps)
    if cfg.kind == "spectrum-check":
        trials = int(cfg.option("trials", 20))
        pred["replica_count"] = trials + int(cfg.option("ref_trials", trials))
    if cfg.kind == "bracket-check":
        pred["replica_count"] = cfg.replicas * len(_cells(cfg))
    return pred


def _cells(cfg):
    cells = cfg.option("cells")
    if cells is None:
        return [(a, b) for a in Variant for b in Variant]
    try:
        return [(_VARIANT_NAMES[a], _VARIANT_NAMES[b]) for a, b in cells]
    except (KeyError, ValueError, TypeError):
        raise ConfigError(f"cells: expected pairs of {', '.join(_VARIANT_NAMES)}") from None


def _traj(cfg: ExperimentConfig, n: int, t_final: float, seed: int, snaps=None) -> TrajectoryConfig:
    return TrajectoryConfig(int(n), cfg.params, t_final, dt=cfg.dt,
                            scheme=cfg.option("scheme", Scheme.GEOMETRIC),
                            orientation=cfg.option("orientation", Orientation.LEFT), seed=seed,
                            snapshot_times=snaps)


def _needs_inverse(poly) -> bool:
    return any(l.variant >= Variant.INV for l in poly.letters() if not l.det)


def _mc_values(cfg, poly: TracePolynomial, n: int, seed: int):
    tcfg = _traj(cfg, n, max(cfg.times), seed, snaps=cfg.times)
    factory = _deterministic(cfg)
    dets = tuple(factory(n)) if factory else ()

    def stat(samples):
        return np.stack([np.asarray(evaluate_on_sample(poly, s)) for s in samples], axis=1)

    return run_replicas(tcfg, cfg.replicas, stat, workers=cfg.workers, inverse=_needs_inverse(poly),
                        deterministic=dets)


def _seed_for(cfg, n) -> int:
    return int(np.random.SeedSequence([cfg.seed, int(n)]).generate_state(1, dtype=np.uint64)[0])


def _run_simulate(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    rows = []
    files = {}
    factory = _deterministic(cfg)
    for n in cfg.n_list:
        seed = _seed_for(cfg, n)
        tcfg = _traj(cfg, n, max(cfg.times), seed, snaps=cfg.times)
        dets = tuple(factory(n)) if factory else ()
        samples = simulate_batch(tcfg, cfg.replicas, rng=make_rng(seed, 0), deterministic=dets,
                                 inverse=_needs_inverse(poly))
        for s in samples:
            vals = np.atleast_1d(evaluate_on_sample(poly, s))
            for r, v in enumerate(vals):
                rows.append((int(n), s.time, r, v.real, v.imag))
            if cfg.option("save_matrices", False):
                for r in range(s.batch_size):
                    for l in range(s.p):
                        m = s.g[r, l]
                        lines = [" ".join(f"{z.real!r} {z.imag!r}" for z in row) for row in m]
                        files[f"matrix-N{int(n)}-t{s.time:g}-r{r}-g{l + 1}.txt"] = "\n".join(lines) + "\n"
    files["values.csv"] = _table(["N", "t", "replica", "re_value", "im_value"], rows)
    return files


def _exact(cfg, poly, n, t):
    d = cfg.d if cfg.d is not None else poly.degree
    op = build_generator(cfg.p, d, cfg.params, n=n)
    return expectation_trace(poly, t, op)


def _run_moments(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    rows = []
    for n in cfg.n_list:
        for t in cfg.times:
            v = _exact(cfg, poly, n, t)
            rows.append((_n_value(n), t, v.real, v.imag, "generator"))
    return {"moments.csv": _table(["N", "t", "re_value", "im_value", "method"], rows)}


def _run_compare(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    rows = []
    for n in cfg.n_list:
        vals = _mc_values(cfg, poly, int(n), _seed_for(cfg, n))
        for j, t in enumerate(cfg.times):
            x = vals[:, j]
            mean = complex(x.mean())
            se = math.hypot(np.std(x.real, ddof=1), np.std(x.imag, ddof=1)) / math.sqrt(len(x)) if len(x) > 1 \
                else float("nan")
            ex = _exact(cfg, poly, n, t)
            diff = abs(mean - ex)
            rows.append((int(n), t, cfg.replicas, mean.real, mean.imag, se, ex.real, ex.imag, diff,
                         diff / se if se > 0 else float("nan")))
    return {"compare.csv": _table(["N", "t", "replicas", "re_mc", "im_mc", "se", "re_exact", "im_exact",
                                   "abs_diff", "z"], rows)}


def _run_variance_scan(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    f = _function(cfg)
    t = cfg.times[0]
    scan = variance_scan(poly, f, cfg.params, t, [int(n) for n in cfg.n_list], cfg.replicas, cfg.seed,
                         dt=cfg.dt, workers=cfg.workers, deterministic=_deterministic(cfg))
    rows = [(n, scan.reps, m, v, se) for n, m, v, se in zip(scan.n_list, scan.means, scan.variances,
                                                             scan.variance_se)]
    return {"variances.csv": _table(["N", "replicas", "mean", "variance", "variance_se"], rows),
            "fit.csv": _table(["t", "slope", "slope_stderr", "ci_low", "ci_high", "intercept"],
                              [(t, scan.slope, scan.slope_stderr, scan.slope_ci[0], scan.slope_ci[1],
                                scan.intercept)])}


def _run_convergence_scan(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    rows, fits = [], []
    n_list = [n for n in cfg.n_list if math.isfinite(n)]
    for t in cfg.times:
        scan = weak_convergence_scan(poly, t, cfg.params, n_list, d=cfg.d)
        for n, v, g in zip(scan.n_list, scan.finite_values, scan.gaps):
            rows.append((int(n), t, v.real, v.imag, g))
        fits.append((t, scan.free_value.real, scan.free_value.imag, scan.slope, scan.intercept, scan.degenerate))
    return {"gaps.csv": _table(["N", "t", "re_value", "im_value", "gap"], rows),
            "fit.csv": _table(["t", "re_free", "im_free", "slope", "intercept", "degenerate"], fits)}


def _run_spectrum_check(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    if len(cfg.n_list) != 2 and "n_small" not in cfg.raw:
        raise ConfigError("spectrum-check: give sizes.N = [n_small, n_ref] or n_small / n_ref")
    n_small = int(cfg.option("n_small", cfg.n_list[0] if cfg.n_list else 0))
    n_ref = int(cfg.option("n_ref", cfg.n_list[-1] if cfg.n_list else 0))
    delta = float(cfg.option("delta", 0.1))
    trials = int(cfg.option("trials", 20))
    rep = spectrum_inclusion_check(poly, cfg.params, cfg.times[0], n_small, n_ref, delta, trials, cfg.seed,
                                   ref_trials=cfg.option("ref_trials"), dt=cfg.dt,
                                   deterministic=_deterministic(cfg), workers=cfg.workers)
    summary = [(rep.n_small, rep.n_ref, rep.delta, rep.trials, rep.outliers, rep.total, rep.outlier_fraction,
                rep.max_excess, rep.max_distance)]
    return {"inclusion.csv": _table(["n_small", "n_ref", "delta", "trials", "outliers", "total",
                                     "outlier_fraction", "max_excess", "max_distance"], summary),
            "reference.csv": _table(["low", "high"], rep.reference)}


def _function(cfg):
    options = cfg.option("function")
    if not isinstance(options, dict):
        raise ConfigError("function: expected an object with a \"kind\" field")
    try:
        return smooth_function(options)
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"function: {exc}") from None


def _run_hs_check(cfg, out_dir) -> Dict[str, str]:
    poly = _parse_polynomial(cfg)
    f = _function(cfg)
    k = int(cfg.option("order", HS_ORDER))
    factory = _deterministic(cfg)
    rows = []
    for n in cfg.n_list:
        seed = _seed_for(cfg, n)
        tcfg = _traj(cfg, n, cfg.times[0], seed)
        dets = tuple(factory(n)) if factory else ()
        s = simulate_batch(tcfg, cfg.replicas, rng=make_rng(seed, 0), deterministic=dets,
                           inverse=poly.needs_inverse)[-1]
        hs = eval_pp_star(poly, s)
        for r in range(cfg.replicas):
            res = hs_trace(f, k, hs[r])
            rows.append((int(n), r, res.value, res.direct, abs(res.value - res.direct), res.error_estimate))
    return {"hs.csv": _table(["N", "replica", "hs_value", "direct_value", "abs_diff", "error_estimate"], rows)}


def _run_bracket_check(cfg, out_dir) -> Dict[str, str]:
    n = int(cfg.n_list[0]) if cfg.n_list else 32
    dt = cfg.dt if cfg.dt is not None else 1e-3
    rows = []
    names = {v: k for k, v in _VARIANT_NAMES.items()}
    for i, (e1, e2) in enumerate(_cells(cfg)):
        est = estimate_bracket(e1, e2, cfg.params, n, dt, cfg.replicas, make_rng(cfg.seed, i))
        rows.append((names[e1], names[e2], est.coefficient.real, est.coefficient.imag, est.expected.real,
                     est.expected.imag, est.stderr.real, est.stderr.imag, est.z_score()))
    return {"bracket.csv": _table(["eps1", "eps2", "re_coef", "im_coef", "re_expected", "im_expected", "re_se",
                                   "im_se", "z"], rows)}


_PIPELINES = {
    "simulate": _run_simulate,
    "moments": _run_moments,
    "compare": _run_compare,
    "variance-scan": _run_variance_scan,
    "convergence-scan": _run_convergence_scan,
    "spectrum-check": _run_spectrum_check,
    "hs-check": _run_hs_check,
    "bracket-check": _run_bracket_check,
}


# ---------------------------------------------------------------- orchestration

@dataclass(frozen=True)
class RunManifest:
    """What a run produced; ``files`` maps table names to sha256 digests."""

    directory: str
    config: Dict[str, Any]
    version: str
    timestamp: str
    seeds: Dict[str, Any]
    wall_clock: float
    backend: str
    files: Dict[str, str]

    def to_json(self) -> str:
        body = {"config": self.config, "artifact_version": self.version, "timestamp": self.timestamp,
                "seeds": self.seeds, "wall_clock_seconds": self.wall_clock, "kernel_backend": self.backend,
                "files": [{"name": k, "sha256": v} for k, v in sorted(self.files.items())]}
        return json.dumps(body, indent=2, sort_keys=True, default=str) + "\n"


def _run_dir(root: str, kind: str) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
    path = os.path.join(root, f"{kind}-{stamp}")
    suffix = 1
    while os.path.exists(path):
        suffix += 1
        path = os.path.join(root, f"{kind}-{stamp}-{suffix}")
    return path


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute ``cfg`` and write its manifest and tables."""
    start = time.perf_counter()
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    tables = _PIPELINES[cfg.kind](cfg, cfg.output_dir)
    out_dir = _run_dir(cfg.output_dir, cfg.kind)
    os.makedirs(out_dir)
    digests = {}
    for name, text in sorted(tables.items()):
        data = text.encode()
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    seeds = {"base": cfg.seed,
             "streams": "per-N SeedSequence([seed, N]) then one stream per replica block"}
    manifest = RunManifest(out_dir, cfg.raw, __version__, stamp, seeds, round(time.perf_counter() - start, 3),
                           kernels.BACKEND, digests)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json())
    return manifest


def _fail(code: int, cls: str, reason: str) -> int:
    print(json.dumps({"status": "error", "class": cls, "exit_code": code, "reason": reason}), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gltau", description="Experiments with multiplicative Brownian motions on GL_N.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="JSON experiment file")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--workers", type=int, help="worker threads for Monte-Carlo replicas")
    ap.add_argument("--dry-run", action="store_true", help="validate and predict resource use only")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except OSError as exc:
        return _fail(EXIT_CONFIG, "config", f"cannot read config: {exc.strerror}")
    except json.JSONDecodeError as exc:
        return _fail(EXIT_CONFIG, "config", f"invalid JSON at line {exc.lineno}, column {exc.colno}")
    try:
        cfg = load_config(data, kind=args.kind, seed=args.seed, out=args.out, workers=args.workers,
                          base_dir=os.path.dirname(os.path.abspath(args.config)))
        if args.dry_run:
            print(json.dumps(_dry_run(cfg), sort_keys=True))
            return 0
        manifest = run(cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (ResourceError, MemoryError) as exc:
        return _fail(EXIT_RESOURCE, "resource", str(exc) or type(exc).__name__)
    except (SingularityError, ToleranceError, ClosureError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except (ValueError, TypeError, IndexError) as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    print(json.dumps({"status": "ok", "directory": manifest.directory,
                      "files": sorted(manifest.files)}, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
