"""Exception hierarchy shared by all gltau modules."""


class GltauError(Exception):
    """Base class for every error raised by the package."""


class AdmissibilityError(GltauError, ValueError):
    """(lambda, tau) outside the admissible disk |tau - lambda| <= lambda."""


class ScaleError(GltauError, ValueError):
    """A per-process time scale sigma is not strictly positive."""


class DegenerateError(GltauError, ValueError):
    """Both a and b vanish, so the driving noise is zero."""


class SingularityError(GltauError, ArithmeticError):
    """An Ito-Euler iterate became numerically singular (step too large)."""


class UnsupportedLetterError(GltauError, ValueError):
    """A deterministic letter reached the symbolic generator."""


class ResourceError(GltauError):
    """A requested basis or workload exceeds the configured cap."""


class ClosureError(GltauError, AssertionError):
    """The generator produced a term outside the filtration level E_d."""


class ToleranceError(GltauError, ArithmeticError):
    """An integrator or quadrature failed to meet its tolerance."""


class ArityError(GltauError, ValueError):
    """A polynomial refers to processes or matrices a sample does not carry."""


class TraceSyntaxError(GltauError, ValueError):
    """Malformed polynomial text; carries the 1-based line and column."""

    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
