"""Exception hierarchy shared by every module."""


class PhysioDftError(Exception):
    """Base class for all errors raised by physiodft."""


class InvalidTaskError(PhysioDftError, ValueError):
    pass


class ParameterDomainError(PhysioDftError, ValueError):
    pass


class IllConditionedFeedbackError(PhysioDftError, ArithmeticError):
    pass


class DegenerateCovarianceError(PhysioDftError, ArithmeticError):
    def __init__(self, message, smallest_eigenvalue=None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class AccuracyError(PhysioDftError, ArithmeticError):
    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class DataError(PhysioDftError, ValueError):
    pass


class SpecError(PhysioDftError, ValueError):
    """Inconsistent model, link or utility specification."""


class StartValueError(PhysioDftError, ValueError):
    pass


class InferenceError(PhysioDftError, ArithmeticError):
    def __init__(self, message, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions


class OrderingError(PhysioDftError, ValueError):
    pass
