"""Multiplicative (lambda, tau)-Brownian motions on GL_N.

Submodules
----------
model
    Parameters and Gaussian increments.
sde
    Matrix SDE integrators, replicas and the covariation estimator.
words, tracepoly, generator
    Trace-polynomial algebra and the exact moment engine.
spectral
    Spectra of ``P P*``, smooth test functions and statistical scans.
cli
    The ``gltau`` command.
"""
__version__ = "0.1.0"

from .errors import (AdmissibilityError, ArityError, ClosureError, DegenerateError, GltauError, ResourceError,
                     ScaleError, SingularityError, ToleranceError, TraceSyntaxError, UnsupportedLetterError)
from .model import (ModelParams, elliptic_noise, hermitian_noise, make_rng, params_from_abtheta,
                    sample_elliptic_increment, sample_hermitian_increment, validate_params)
from .words import Letter, Variant, Word, adjoint_word, canonicalize, det, g, word_str
from .sde import (BracketEstimate, DriftReport, GlSample, Orientation, Scheme, TrajectoryConfig, bracket_template,
                  estimate_bracket, evaluate_word, read_matrix_file, run_replicas, simulate, simulate_batch,
                  simulate_with_inverse_tracking)
from .tracepoly import (MatrixPolynomial, TracePolynomial, evaluate_at_identity, evaluate_on_sample,
                        parse_matrix_polynomial, parse_trace_polynomial)
from .generator import (GeneratorOperator, apply_delta, apply_delta_tilde, build_generator, enumerate_basis,
                        expectation_trace, predicted_dimension)
from .spectral import (SelfAdjointPoly, SmoothFunction, SpectralSample, build_mollified_indicator, bump,
                       empirical_spectrum, eval_pp_star, hs_trace, spectrum_inclusion_check, variance_scan,
                       weak_convergence_scan)

__all__ = [name for name in dir() if not name.startswith("_")]
