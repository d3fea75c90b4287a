"""Exception hierarchy shared by every ds2cf module."""


class DS2CFError(Exception):
    """Base class for all package errors."""


class ParseError(DS2CFError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(DS2CFError, ValueError):
    """Input outside the mathematical domain (e.g. a negative feature)."""


class FormatError(DS2CFError, ValueError):
    """Binary file does not follow the expected layout."""


class ConsistencyError(DS2CFError, ValueError):
    """Two related inputs disagree (e.g. image and label counts)."""


class DegenerateInputError(DS2CFError, ValueError):
    pass


class InputError(DS2CFError, ValueError):
    pass


class ShapeError(DS2CFError, ValueError):
    pass


class NumericalError(DS2CFError, ArithmeticError):
    pass


class ConfigError(DS2CFError, ValueError):
    """Experiment configuration failed validation; ``problems`` lists every failure."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class ArtifactNotFoundError(DS2CFError, FileNotFoundError):
    pass
