"""Error hierarchy.

Two roots map onto CLI exit codes: :class:`InputError` (bad or insufficient
inputs, exit 2) and :class:`NumericalError` (a computation that cannot be
completed, exit 3).
"""

from __future__ import annotations


class LocalBoundError(Exception):
    """Base class for every error raised by this package."""


class InputError(LocalBoundError, ValueError):
    pass


class NumericalError(LocalBoundError, ArithmeticError):
    pass


# market data
class MalformedRow(InputError):
    def __init__(self, path: str, line: int, reason: str):
        self.path, self.line, self.reason = path, line, reason
        super().__init__(f"{path}:{line}: {reason}")


class EmptyAfterCleaning(InputError):
    pass


class InsufficientData(InputError):
    pass


# risk-neutral estimation
class TooFewStrikes(InputError):
    pass


class NonconvergentImpliedVol(NumericalError):
    pass


class BracketingError(InputError):
    pass


class MixedHorizon(InputError):
    pass


# quantile regression
class DegenerateDesign(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class AlignmentError(InputError):
    pass


class WindowTooLong(InputError):
    pass


class SingularCovariance(NumericalError):
    pass


# bounds
class GridMismatch(InputError):
    pass


class ZeroVariance(NumericalError):
    pass


class TooFewObservations(InputError):
    pass


class InsufficientBootstrap(InputError):
    pass


class InvalidExponent(InputError):
    pass


# risk adjustment
class DenominatorNonpositive(NumericalError):
    pass


class StepOutOfRange(InputError):
    pass


class NoRoot(NumericalError):
    def __init__(self, message: str, sign_profile: str = ""):
        self.sign_profile = sign_profile
        super().__init__(f"{message} (sign profile: {sign_profile})" if sign_profile else message)


class UnsupportedUtility(InputError):
    pass


# models
class OutOfSupport(InputError):
    pass


class MomentUndefined(NumericalError):
    pass


class DivergentTilt(NumericalError):
    pass


class ConfigError(InputError):
    pass
