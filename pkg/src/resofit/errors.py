"""Exception hierarchy shared by all resofit modules.

Every error carries a module-qualified ``code`` so the CLI can report a
stable identifier and map it onto an exit status.
"""


class ResofitError(Exception):
    """Base class for all errors raised by resofit."""

    code = "resofit.error"


class ParseError(ResofitError, ValueError):
    """Malformed instrument or results document."""

    code = "trace-io.parse"

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ManifestError(ResofitError, ValueError):
    code = "trace-io.manifest"


class InputFileError(ResofitError, OSError):
    """An input file named by the user could not be read."""

    code = "trace-io.io"


class ModelError(ResofitError, ValueError):
    code = "resonance-model.domain"


class FitError(ResofitError, RuntimeError):
    """A fitting stage could not produce a usable result."""

    code = "circle-fit.fit"


class DelayEstimateError(FitError):
    code = "circle-fit.delay"


class DegenerateCircleError(FitError):
    code = "circle-fit.degenerate"


class ConvergenceError(FitError):
    code = "circle-fit.convergence"


class QuasiparticleError(FitError):
    code = "quasiparticle-fit.fit"


class InsufficientSpanError(QuasiparticleError):
    code = "quasiparticle-fit.span"
