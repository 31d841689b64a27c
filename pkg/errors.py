"""
Исключения библиотеки.
Каждое исключение несёт машиночитаемый код, который CLI выводит в отчёт об ошибке.
"""

from typing import Any, Dict, Optional


class WalkError(Exception):
    """Базовая ошибка анализа периодического блуждания."""

    code = "E_WALK"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class EnvironmentSyntaxError(WalkError):
    code = "E_SYNTAX"

    def __init__(self, message: str, line: int, column: int):
        super().__init__(
            f"{message} (строка {line}, позиция {column})",
            {"line": line, "column": column},
        )
        self.line = line
        self.column = column


class EnvironmentSchemaError(WalkError):
    code = "E_SCHEMA"


class DuplicateSiteError(WalkError):
    code = "E_DUPLICATE_SITE"


class MissingSiteError(WalkError):
    code = "E_MISSING_SITE"


class ProbabilitySumError(WalkError):
    code = "E_PROB_SUM"


class NonPositiveProbabilityError(WalkError):
    code = "E_NONPOSITIVE_PROB"


class DimensionMismatchError(WalkError):
    code = "E_DIMENSION"


class ParameterDomainError(WalkError):
    code = "E_DOMAIN"


class NotIrreducibleError(WalkError):
    code = "E_NOT_IRREDUCIBLE"


class InconsistencyError(WalkError):
    """Нарушено тождество, которое должно выполняться всегда (внутренняя ошибка)."""

    code = "E_INCONSISTENT"


class SingularMatrixError(WalkError):
    code = "E_SINGULAR"


class NotNearestNeighbourError(WalkError):
    code = "E_NOT_NEAREST_NEIGHBOUR"


class NotReversibleError(WalkError):
    code = "E_NOT_REVERSIBLE"


class PathDependenceError(WalkError):
    code = "E_PATH_DEPENDENT"


class LineDependenceError(WalkError):
    code = "E_LINE_DEPENDENT"


class ZeroGradientError(WalkError):
    code = "E_ZERO_GRADIENT"


class ScalingOverflowError(WalkError):
    code = "E_OVERFLOW"


class CensoredError(WalkError):
    code = "E_CENSORED"


class UsageError(WalkError):
    code = "E_USAGE"


class FileAccessError(WalkError):
    code = "E_FILE"
