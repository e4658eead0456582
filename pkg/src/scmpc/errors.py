"""Exception hierarchy."""


class SCMPCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SCMPCError, ValueError):
    """Invalid model, distribution, constraint or experiment configuration."""


class UsageError(SCMPCError, ValueError):
    """A function was called outside its documented domain."""


class NumericalError(SCMPCError, RuntimeError):
    """A numerical routine failed to converge."""


class InfeasibleProgramError(SCMPCError, RuntimeError):
    """The scenario program has no feasible point and soft constraints are off."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InadmissiblePairError(ConfigurationError):
    """A sample-removal pair does not meet its violation level."""


class RemovalGuardError(UsageError):
    """Exhaustive removal would need too many program solves."""
