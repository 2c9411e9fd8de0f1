"""Exception types shared across the package."""


class SynthlatError(Exception):
    """Base class for package-specific errors."""


class SingularMatrixError(SynthlatError):
    """Coupling matrix is numerically singular at a sweep point."""

    def __init__(self, message, delta=None, loop_phase=None):
        super().__init__(message)
        self.delta = delta
        self.loop_phase = loop_phase


class DegenerateBandError(SynthlatError):
    """Band gap closes on the k grid, so band eigenvectors are ambiguous."""


class DegenerateBackgroundError(SynthlatError):
    """Fitted background line crosses zero inside the measurement band."""


class TraceParseError(SynthlatError):
    """Trace file violates the expected schema."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FitError(SynthlatError):
    """Least-squares fit failed."""

    def __init__(self, message, stage=None, iterations=None, residual_norm=None):
        super().__init__(message)
        self.stage = stage
        self.iterations = iterations
        self.residual_norm = residual_norm


class RankDeficiencyError(FitError):
    """Normal equations are singular: some parameter combinations are unconstrained."""

    def __init__(self, message, null_combinations=(), **kwargs):
        super().__init__(message, **kwargs)
        self.null_combinations = tuple(null_combinations)
