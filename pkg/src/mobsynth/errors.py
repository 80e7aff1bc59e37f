"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MobsynthError(Exception):
    """Base class for all package errors."""


class ConfigError(MobsynthError):
    """Invalid configuration or input files (user error)."""


class TimeParseError(MobsynthError, ValueError):
    def __init__(self, token: str):
        super().__init__(f"malformed time token {token!r}, expected HH:MM")
        self.token = token


class TemplateError(MobsynthError):
    def __init__(self, placeholder: str, template: str = ""):
        where = f" in template {template!r}" if template else ""
        super().__init__(f"missing binding for placeholder {{{placeholder}}}{where}")
        self.placeholder = placeholder


class BackendUnavailable(MobsynthError):
    """Remote backend could not be reached after all retries."""


class ProtocolError(MobsynthError):
    """Provider answered with a payload we could not interpret."""

    def __init__(self, message: str, raw_body: str = ""):
        super().__init__(message)
        self.raw_body = raw_body


class ExtractionError(MobsynthError, ValueError):
    def __init__(self, message: str, excerpt: str = ""):
        super().__init__(f"{message}: {excerpt!r}" if excerpt else message)
        self.excerpt = excerpt


class PlannerError(MobsynthError):
    """Narrative generation failed."""


class GroundingError(MobsynthError):
    """No POI exists for a requested category."""


class FeasibilityError(MobsynthError):
    """No transport mode can make a trip within its time budget."""


class NumericError(MobsynthError, ArithmeticError):
    pass


class MetricError(MobsynthError, ValueError):
    pass
