"""Error taxonomy shared across the package.

ConfigurationError and IngestionError map to CLI exit code 2,
everything else to exit code 1.
"""


class ConfigurationError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class IngestionError(ValueError):
    """Dataset could not be loaded or parsed."""


class ProtocolError(RuntimeError):
    """A message violated the round protocol (wrong count, bad index, ragged shapes)."""
