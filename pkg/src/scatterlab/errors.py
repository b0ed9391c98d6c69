"""Exception hierarchy shared by every scatterlab module."""


class ScatterLabError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(ScatterLabError, ValueError):
    pass


class SingularMatrix(ScatterLabError, ValueError):
    pass


class SingularScatter(ScatterLabError, ValueError):
    """A scatter estimate (or one of its iterates) lost definiteness."""


class ZeroVector(ScatterLabError, ValueError):
    """A centered observation is numerically zero (Tyler weights undefined)."""


class NoConvergence(ScatterLabError, RuntimeError):
    """Raised only when a caller demands convergence; estimators otherwise flag it."""


class ConvergenceWarning(RuntimeWarning):
    pass


class Unsupported(ScatterLabError, NotImplementedError):
    pass


class MissingCertificate(ScatterLabError, ValueError):
    """The distribution cannot certify independence of the requested components."""


class UnknownFixture(ScatterLabError, KeyError):
    pass


class ConfigError(ScatterLabError, ValueError):
    pass


class ExperimentError(ScatterLabError, RuntimeError):
    pass


class MissingResults(ScatterLabError, FileNotFoundError):
    pass
