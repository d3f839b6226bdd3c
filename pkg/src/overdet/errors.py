"""Exception types raised across the toolkit."""


class OverdetError(Exception):
    """Base class for all toolkit errors."""


class OutOfDomain(OverdetError):
    pass


class NonFinite(OverdetError):
    pass


class TracingError(OverdetError):
    pass


class NoZeroSet(TracingError):
    pass


class NotClosed(TracingError):
    pass


class DegenerateGradient(TracingError):
    pass


class InadmissibleJet(OverdetError):
    pass


class BadAnisotropy(OverdetError):
    pass


class NonPositiveF(OverdetError):
    pass


class OutOfRange(OverdetError):
    pass


class NoConvergence(OverdetError):
    pass


class MixedSignature(OverdetError):
    pass


class NotConvex(OverdetError):
    pass


class IncompleteCoverage(OverdetError):
    pass


class SingularLambda(OverdetError):
    pass


class InsufficientSampling(OverdetError):
    pass


class InadmissibleIterate(OverdetError):
    pass


class ConfigError(OverdetError):
    """Bad scenario configuration; carries the offending section/key."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ParseError(OverdetError):
    pass
