"""Exception hierarchy shared by all opsampl modules."""


class OpsamplError(Exception):
    """Base class for library errors."""


class DomainError(OpsamplError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DimensionMismatch(OpsamplError, ValueError):
    pass


class SizeLimitExceeded(OpsamplError):
    """Exhaustive enumeration or dense conversion would exceed its budget."""


class NotRectifiable(OpsamplError):
    pass


class IllConditioned(OpsamplError):
    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class TooManyCells(OpsamplError):
    pass


class WindowInvalid(OpsamplError, ValueError):
    pass


class NotCoprime(OpsamplError, ValueError):
    pass


class UnsupportedDimension(OpsamplError, ValueError):
    pass


class NoConsistentSupport(OpsamplError):
    pass


class AmbiguousSupport(OpsamplError):
    def __init__(self, message, supports=()):
        super().__init__(message)
        self.supports = tuple(supports)


class ConfigInvalid(OpsamplError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
