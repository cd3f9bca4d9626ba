"""Exception hierarchy shared across the toolkit."""


class DccmError(Exception):
    """Base class for all toolkit-specific failures."""


class FileFormatError(DccmError):
    """A data file failed validation.

    Carries the file path and a JSON-pointer-style location of the
    offending field so CLI users can find the problem.
    """

    def __init__(self, path, pointer, message):
        self.path = str(path)
        self.pointer = pointer
        super().__init__(f"{self.path}: at '{pointer}': {message}")


class SolverCapacityError(DccmError):
    """Problem size exceeds what the built-in dense solver can handle."""


class SynthesisInfeasible(DccmError):
    """The metric/gain synthesis program admits no certificate.

    Raised when the SDP solver reports infeasibility for the requested
    template (degrees, contraction rate) on the given system.
    """


class SolverFailure(DccmError):
    """The SDP solver stopped without a conclusive answer."""


class MetricFailure(DccmError):
    """The state-dependent metric could not be evaluated soundly."""

    def __init__(self, message, x=None):
        self.x = None if x is None else tuple(float(v) for v in x)
        if self.x is not None:
            message = f"{message} at x={self.x}"
        super().__init__(message)


class SingularMetric(MetricFailure):
    """W(x) is numerically singular (condition number too large)."""


class NonPositiveMetric(MetricFailure):
    """M(x) has a non-positive eigenvalue; the certificate does not
    define a Riemannian metric at this point."""


class SimulationAborted(DccmError):
    """Closed-loop rollout failed mid-run.

    Keeps the step index and the partial trajectory log so callers can
    inspect everything up to the failure.
    """

    def __init__(self, step, log, cause):
        self.step = int(step)
        self.log = log
        self.cause = cause
        super().__init__(f"simulation aborted at step {self.step}: {cause}")
