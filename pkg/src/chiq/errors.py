"""Exception hierarchy shared across the toolkit."""


class ChiqError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ChiqError):
    """A data file violates its expected schema or invariants."""


class ConfigError(ChiqError):
    """Invalid or contradictory configuration."""


class GatewayError(ChiqError):
    """Language-model gateway failure (protocol, backend misuse, empty output)."""


class TransportError(GatewayError):
    """Network-level failure that persisted through the retry budget."""
