"""Exception hierarchy shared by all pipeline stages."""


class AiblobError(Exception):
    """Base class for every error raised by this package."""


class ParseError(AiblobError):
    """Input file is structurally malformed (bad JSON, missing field, wrong type)."""


class ValidationError(AiblobError):
    """Data violates a documented invariant (non-monotone times, duplicate id, bad score)."""


class ConfigError(AiblobError):
    """Configuration value is out of range or inconsistent (dim mismatch, bad quota)."""


class ProviderError(AiblobError):
    """An embedding or LLM provider failed: transport error, malformed or exhausted response."""


class StoreError(AiblobError):
    """Vector store persistence problem: missing files, bad magic, count mismatch."""


class PlanError(AiblobError):
    """The narrative plan cannot be built (e.g. too few retained sentences)."""


class RenderError(AiblobError):
    """EDL rendering cannot proceed or the external renderer failed."""
