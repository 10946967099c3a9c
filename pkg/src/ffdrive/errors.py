"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad run configuration: unknown key, unparsable value, missing file."""


class NumericalError(RuntimeError):
    """A numerical contract was violated: divergence, norm drift, failed
    bracket, non-finite field value, off-shell ensemble, ..."""
