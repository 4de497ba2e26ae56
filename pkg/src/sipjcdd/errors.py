"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration (bad dimensions, parameters out of range)."""


class DimensionCapError(RuntimeError):
    """Joint space-frequency estimation refused because the stacked problem
    dimension exceeds the configured cap; use the decoupled estimator instead."""


class WireFormatError(IOError):
    """Malformed binary file: bad magic, truncated payload, or bad header."""


class ShapeMismatchError(WireFormatError):
    """Tensor arrived with a rank or dimensions different from what the
    caller expected."""

    def __init__(self, expected, actual):
        super().__init__(f"tensor shape mismatch: expected {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)


class EstimatorFailure(RuntimeError):
    """Refined channel estimation failed; the message carries the JCDD
    iteration index, the cause is chained."""


class EndpointError(RuntimeError):
    """External estimator endpoint failed (bad exit, unusable response)."""


class EndpointTimeout(EndpointError):
    """External estimator endpoint did not answer within the deadline."""
