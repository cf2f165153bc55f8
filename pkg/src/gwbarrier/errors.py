"""Exception types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or parameters outside a validated domain (exit 2)."""


class ResourceError(RuntimeError):
    """Memory or output budget exceeded, or output not writable (exit 3)."""
