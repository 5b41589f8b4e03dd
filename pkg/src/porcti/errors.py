class PorError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(PorError, ValueError):
    pass


class MalformedReportError(PorError, ValueError):
    pass


class DegenerateEvidenceError(PorError, ArithmeticError):
    pass


class UnknownNodeError(PorError, KeyError):
    pass


class NoSupervisorError(PorError):
    pass


class RoleError(PorError):
    pass


class IndexGapError(PorError):
    pass


class UndefinedMetricError(PorError, ValueError):
    pass


class LedgerError(PorError):
    pass


class ConfigError(PorError, ValueError):
    pass
