"""Exception types shared across the toolkit."""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (bad dimensions, bad parameters)."""


class RejectedInputError(ValueError):
    """Input outside its admissible set (e.g. control outside the control box)."""


class NumericalError(RuntimeError):
    """A numerical operation failed in a way that would corrupt guarantees."""


class AbstractionIntegrityError(RuntimeError):
    """An iMDP row violates the feasibility invariant sum(lo) <= 1 <= sum(hi)."""


class ControllerIntegrityError(RuntimeError):
    """No admissible control satisfies the target equality; indicates an abstraction bug."""
