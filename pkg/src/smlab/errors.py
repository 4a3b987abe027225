"""Exception hierarchy shared by all smlab modules."""


class SmlabError(Exception):
    """Base class for every error raised by smlab."""


class DimensionMismatch(SmlabError, ValueError):
    pass


class AbsoluteContinuityViolation(SmlabError, ValueError):
    pass


class EnumerationTooLarge(SmlabError):
    pass


class DomainError(SmlabError, ValueError):
    pass


class ConvergenceFailure(SmlabError):
    pass


class NonConvergence(SmlabError):
    pass


class InfeasibleMask(SmlabError):
    pass


class InfeasibleBudget(SmlabError):
    pass


class SupportTooLarge(SmlabError):
    pass


class IterationLimit(SmlabError):
    pass


class CapExceeded(SmlabError):
    pass


class ConfigError(SmlabError, ValueError):
    pass
