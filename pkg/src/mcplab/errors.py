"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A parameter lies outside the domain where a formula or model is defined."""


class PreconditionError(ValueError):
    """Inputs to a coupled run do not satisfy the required initial ordering."""


class ResourceCapError(RuntimeError):
    """Expected work exceeds a configured resource cap."""


class UnknownEdgeError(KeyError):
    """A directed neighbor pair does not exist in the box."""
