"""Exception hierarchy shared by every module."""

from __future__ import annotations


class GnssSentryError(Exception):
    """Base class for all errors raised by gnss_sentry."""


class InvalidInputError(GnssSentryError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateFeatureError(InvalidInputError):
    """A feature (or the label) is constant over the fitting rows."""

    def __init__(self, feature: str):
        super().__init__(f"degenerate feature {feature!r}: max == min over training rows")
        self.feature = feature


class FormatError(GnssSentryError, ValueError):
    """Malformed input file or document.

    ``line`` is the 1-based line number (CSV) and ``token`` the 1-based token
    index (KML coordinates) when known.
    """

    def __init__(self, message: str, *, line: int | None = None, token: int | None = None):
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif token is not None:
            prefix = f"token {token}: "
        super().__init__(prefix + message)
        self.line = line
        self.token = token


class VersionError(FormatError):
    def __init__(self, found: object, supported: object):
        super().__init__(f"unsupported model format version {found} (this build reads version {supported})")
        self.found = found
        self.supported = supported
