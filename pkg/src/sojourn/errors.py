"""Exception hierarchy shared by all sojourn modules."""


class SojournError(Exception):
    """Base class for every error raised by this package."""


class InvalidDistribution(SojournError, ValueError):
    pass


class DegenerateTail(SojournError, ArithmeticError):
    """A running tail sum vanished before the end of the support."""


class OutOfBounds(SojournError, ValueError):
    pass


class EmptyInterval(SojournError, ValueError):
    pass


class SupportViolation(SojournError, ValueError):
    """An observation lies outside ``{shift+1, ..., shift+T}``."""


class NoFeasibleStart(SojournError, RuntimeError):
    pass


class SingularInformation(SojournError, ArithmeticError):
    pass


class InvalidSpec(SojournError, ValueError):
    def __init__(self, message, state=None, level=None):
        if state is not None:
            message = f"{message} (state {state}, level {level})"
        super().__init__(message)
        self.state = state
        self.level = level


class Reducible(SojournError, ValueError):
    pass


class NoConvergence(SojournError, RuntimeError):
    pass


class ParseError(SojournError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyDataset(SojournError, ValueError):
    pass
