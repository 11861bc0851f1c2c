"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain an operation is defined on."""


class ConfigError(ValueError):
    """Inconsistent model or experiment configuration."""


class InferenceError(RuntimeError):
    """The evidence has zero likelihood under every state path."""


class ModelParseError(ValueError):
    """A serialized model document is malformed."""


class EnumerationTooLarge(ValueError):
    """Brute-force enumeration was asked to exceed its size guard."""
