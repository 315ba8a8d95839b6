"""
Errors - domain exception hierarchy for the RecogPass analyzer
Every failure a caller can act on derives from RecogPassError
"""

from typing import Optional


class RecogPassError(Exception):
    """Base class for all analyzer errors (CLI exit status 1)"""


class ConfigError(RecogPassError):
    pass


class TraceFormatError(RecogPassError):
    """Malformed trace input; `line` is the 1-based line/record number when known"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SaxParameterError(RecogPassError):
    pass


class RecognizerError(RecogPassError):
    pass


class EvaluationError(RecogPassError):
    pass


class ModelError(RecogPassError):
    pass


class MetricError(RecogPassError):
    pass


class GuessBudgetExhausted(MetricError):
    """A truncated guess stream ran out before reaching the requested mass"""

    def __init__(self, budget: int, reached: float, alpha: float):
        self.budget = budget
        self.reached = reached
        super().__init__(f"guess budget of {budget} exhausted at cumulative probability {reached:.9f} "
                         f"< alpha {alpha}; raise --max-guesses or use the histogram method")


class PatternError(RecogPassError):
    pass
