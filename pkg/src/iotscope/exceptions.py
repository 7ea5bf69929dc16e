"""Error types raised across the toolkit.

Every domain error derives from :class:`IotScopeError` so the command line
can map them to exit code 1 and report the class name.
"""


class IotScopeError(Exception):
    """Base class for all domain errors."""


class MalformedPcap(IotScopeError):
    pass


class UnsupportedLinkType(IotScopeError):
    pass


class ClassTooSmall(IotScopeError):
    pass


class EmptyDataset(IotScopeError):
    pass


class TooFewSamples(IotScopeError):
    pass


class DivergenceDetected(IotScopeError):
    pass


class SchemaVersionMismatch(IotScopeError):
    pass


class CorruptModelFile(IotScopeError):
    pass


class LengthMismatch(IotScopeError):
    pass


class EmptyInput(IotScopeError):
    pass


class ParseError(IotScopeError):
    pass


class InvalidRegex(IotScopeError):
    pass


class RuleSyntaxError(IotScopeError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(IotScopeError):
    pass
