class HanError(Exception):
    """Base class for every failure raised by the pipeline."""

    exit_code = 2


class ConfigError(HanError):
    exit_code = 1


class MissingInputError(HanError):
    """A command needs an artifact (checkpoint, weight stream, CSV) that does not exist."""

    exit_code = 1


class NumericalError(HanError):
    exit_code = 2


class PlanError(NumericalError):
    """Nets and hierarchy plan disagree, or a group was scheduled before its context."""


class DivergenceError(NumericalError):
    """Non-finite activations, losses or gradients."""


class FitError(NumericalError):
    """Levenberg-Marquardt did not converge or the normal matrix is singular.

    Parameters
    ----------
    exitcode : int
        0 for non-convergence, 1 for a singular system.
    """

    def __init__(self, exitcode: int, message: str):
        super().__init__(message)
        self.exitcode = exitcode


class AcceptanceError(HanError):
    exit_code = 3
