"""Exception hierarchy.

Argument/contract violations raise ``ValueError`` subclasses so callers can
treat them like ordinary bad-input errors; runtime numerical breakdowns raise
``NumericalFailure`` subclasses, which the CLI maps to its own exit code.
"""


class NumericalFailure(RuntimeError):
    """A computation broke down numerically (overflow, singularity, ...)."""


class DivergenceError(NumericalFailure):
    """Particle positions blew up or became non-finite during an update."""


class SingularTransformError(NumericalFailure):
    """A particle transport map lost invertibility (det factor ~ 0 or < 0)."""


class DegenerateWeightsError(NumericalFailure):
    """Importance weights collapsed onto too few particles to be usable."""


class InvalidApproximationError(NumericalFailure):
    """A series approximation was evaluated outside its validity region."""


class DegenerateEnsembleError(ValueError):
    """A particle set is degenerate for the requested operation
    (e.g. all points identical when a pairwise-distance scale is needed)."""


class MissingScoreError(ValueError):
    """A score function was required but the target does not provide one."""


class StateSpaceTooLargeError(ValueError):
    """Exhaustive enumeration was requested on a state space above the cap."""


class InvalidLambdaError(ValueError):
    """A surrogate's ridge parameter failed to make the precision matrix PD."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
