"""Exception hierarchy shared across the package."""


class SaRError(Exception):
    """Base class for every error raised by sarisk."""


class InputError(SaRError, ValueError):
    """Invalid user input (bad parameters, malformed files, inconsistent data)."""


class EmptyUniverse(InputError):
    pass


class ZeroOpenInterest(InputError):
    pass


class UnknownProvider(InputError, KeyError):
    pass


class Unattributed(InputError):
    """A level in scope carries no provider attribution."""


class BadWeights(InputError):
    pass


class MalformedCorrelation(InputError):
    pass


class NegativeQuadraticForm(InputError):
    pass


class WindowTooLong(InputError):
    pass


class InsufficientOverlap(InputError):
    pass


class InsufficientLength(InputError):
    pass


class DegenerateRegression(SaRError, ArithmeticError):
    """Design matrix is rank deficient or the regression fits perfectly."""


class EmptySamples(InputError):
    pass


class NotLiquidatable(SaRError):
    pass


class BadConfig(InputError):
    pass


class MalformedHeader(InputError):
    pass


class EmptyDirectory(InputError):
    pass
