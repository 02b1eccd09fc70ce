"""Exception types shared across the package."""


class NvmagsimError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgument(NvmagsimError, ValueError):
    """An input value violates a documented precondition."""


class ConfigError(NvmagsimError, ValueError):
    """A scenario/config tree failed validation.

    ``path`` is the dotted location of the offending key, e.g. ``"noise.seed"``.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class FitFailedError(NvmagsimError):
    """Nonlinear fit did not converge or could not be initialized.

    Carries the last parameter iterate and residual when available.
    """

    def __init__(self, message, last_params=None, residual=None):
        self.last_params = last_params
        self.residual = residual
        super().__init__(message)


class NoCrossingError(NvmagsimError):
    """No zero crossing found inside the requested fit window."""


class DegenerateReferenceError(NvmagsimError):
    """Reference channel has zero variance; balance gain cannot be tuned."""


class EnbwTooWideError(NvmagsimError, ValueError):
    """Requested ENBW gives a moving-average window shorter than 4 samples."""


class OverflowStageError(NvmagsimError, ArithmeticError):
    """Fixed-point arithmetic exceeded the configured register width.

    ``stage`` names the pipeline stage ("accumulator", "scaling").
    """

    def __init__(self, stage, message=""):
        self.stage = stage
        super().__init__(message or f"fixed-point overflow in stage '{stage}'")


class UnderdeterminedError(NvmagsimError, ValueError):
    """Fewer than four axis splittings supplied to the field inversion."""
