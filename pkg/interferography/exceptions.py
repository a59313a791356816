"""
Error classes raised by interferography.

Every error is a ValueError so callers used to catching ValueError keep
working; the subclasses let the command line map each failure class to a
stable exit code.
"""

__all__ = ['QSIError', 'ConfigError', 'StateError', 'DimensionError',
           'FringeFitError', 'ConvergenceError', 'SingularJacobianError',
           'AggregationError', 'ReconstructionError',
           'IllConditionedChainError', 'ImageFormatError']


class QSIError(ValueError):
    ''' Base class for all interferography errors. '''
    exit_code = 1


class ConfigError(QSIError):
    exit_code = 3


class StateError(QSIError):
    ''' An invalid state, density matrix or preparation. '''
    exit_code = 4


class DimensionError(QSIError):
    exit_code = 5


class FringeFitError(QSIError):
    ''' A slice that cannot be fitted at all (e.g., a constant slice). '''
    exit_code = 6


class ConvergenceError(FringeFitError):

    def __init__(self, message, last_iterate=None):
        super(ConvergenceError, self).__init__(message)
        self.last_iterate = last_iterate


class SingularJacobianError(FringeFitError):

    def __init__(self, message, parameter=None):
        super(SingularJacobianError, self).__init__(message)
        self.parameter = parameter


class AggregationError(QSIError):
    exit_code = 7


class ReconstructionError(QSIError):
    exit_code = 8


class IllConditionedChainError(ReconstructionError):

    def __init__(self, message, k=None):
        super(IllConditionedChainError, self).__init__(message)
        self.k = k


class ImageFormatError(QSIError):
    exit_code = 9
