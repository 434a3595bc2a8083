"""Exception types shared across the package."""


class LambdaRepError(Exception):
    """Base class for all package errors."""


class ConfigError(LambdaRepError, ValueError):
    """Invalid environment/reward configuration (bad grid, missing annotation...)."""


class StructuralError(LambdaRepError, ValueError):
    """Array shapes or dimensions do not agree."""


class NumericError(LambdaRepError, ValueError):
    """NaN or otherwise unusable numeric input."""


class NonConvergenceError(LambdaRepError, RuntimeError):
    """Fixed-point iteration hit max_iters before reaching tolerance."""

    def __init__(self, message, last_residual):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


class EpisodeStateError(LambdaRepError, RuntimeError):
    """Operation not allowed in the current episode state."""


class AgentError(LambdaRepError, ValueError):
    """An agent callback returned an invalid action."""


class UnsupportedInputError(LambdaRepError, ValueError):
    """Input outside what an exact routine can handle (e.g. stochastic dynamics)."""


class UndefinedEstimateError(LambdaRepError, ValueError):
    """Estimator has no information to work with."""


class BoundViolation(LambdaRepError, AssertionError):
    """A theoretical bound failed on a concrete instance."""
