"""Exception hierarchy.

Every error carries a short machine-readable ``category`` string; the CLI
prints it and maps it to a nonzero exit code.
"""


class RingSwarmError(Exception):
    category = "error"


class InvalidArgumentError(RingSwarmError, ValueError):
    category = "invalid-argument"


class InvalidParameterError(RingSwarmError, ValueError):
    category = "invalid-parameter"


class InvalidInputError(RingSwarmError, ValueError):
    category = "invalid-input"


class GridMismatchError(RingSwarmError, ValueError):
    category = "dimension"


class StepRejectedError(RingSwarmError):
    """Raised when a time step violates the stability restriction.

    ``admissible_dt`` holds the largest step the integrator would accept.
    """

    category = "step-rejected"

    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class NoPeriodicSolutionError(RingSwarmError):
    category = "no-periodic-solution"


class UnknownModeError(RingSwarmError, ValueError):
    category = "unknown-mode"


class UnsupportedRegimeError(RingSwarmError, ValueError):
    category = "unsupported-regime"


class TrajectoryTooShortError(RingSwarmError, ValueError):
    category = "trajectory-too-short"


class SimulationAbortedError(RingSwarmError):
    category = "simulation-aborted"


class SpecError(RingSwarmError, ValueError):
    category = "spec"


class HypothesisNotMetError(RingSwarmError, ValueError):
    """A theorem's precondition fails, so its bound does not apply."""

    category = "hypothesis-not-met"


class BoundViolationError(RingSwarmError):
    """A differential inequality is violated beyond tolerance."""

    category = "bound-violated"


class OutputError(RingSwarmError, OSError):
    category = "io"


EXIT_CODES = {
    "error": 1,
    "spec": 2,
    "invalid-argument": 2,
    "invalid-parameter": 2,
    "invalid-input": 3,
    "dimension": 3,
    "unknown-mode": 2,
    "step-rejected": 4,
    "no-periodic-solution": 4,
    "simulation-aborted": 4,
    "unsupported-regime": 4,
    "hypothesis-not-met": 4,
    "trajectory-too-short": 3,
    "io": 5,
    "bound-violated": 6,
}
