"""Exception types shared across modules."""


class ConfigurationError(ValueError):
    """Invalid configuration: unknown language, bad stage set, missing backend."""


class BackendError(RuntimeError):
    """A pluggable backend (ASR/TTS/LLM/embedding/G2P command) failed."""
