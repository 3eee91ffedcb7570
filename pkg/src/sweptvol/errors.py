class SweptVolError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SweptVolError, ValueError):
    pass


class DomainError(SweptVolError, ValueError):
    """A time parameter lies outside the motion's domain."""


class BracketError(SweptVolError, ValueError):
    """The root-finding bracket shows no sign change."""


class ParseError(InvalidInputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
