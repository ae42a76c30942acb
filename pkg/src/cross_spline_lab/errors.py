"""Exceptions raised across the package"""


class CsnError(Exception):
    """Base class for every error raised by cross_spline_lab"""


class ConfigurationError(CsnError, ValueError):
    """Invalid configuration or inconsistent shapes

    Carries every problem found so a user can fix them in one pass.
    """

    def __init__(self, problems: str | list[str]):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(CsnError, ValueError):
    """Bad input data (missing columns, unparseable or non-finite rows)"""

    def __init__(self, message: str, rows: list[int] | None = None):
        self.rows = list(rows or [])
        super().__init__(message)


class NonFiniteError(CsnError, ArithmeticError):
    """A loss or gradient became NaN/inf during fitting"""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


class UndefinedMetricError(CsnError, ValueError):
    """Metric is not defined for the given labels (e.g. AUC on one class)"""


class ModelFormatError(CsnError):
    """Model file is unreadable, truncated or not a model file"""


class ModelVersionError(ModelFormatError):
    """Model file was written with an unsupported format version"""


class SearchError(CsnError):
    """Every trial of a hyperparameter search failed"""

    def __init__(self, reasons: dict[int, str]):
        self.reasons = dict(reasons)
        lines = [f"trial {i}: {reason}" for i, reason in sorted(self.reasons.items())]
        super().__init__("all search trials failed\n" + "\n".join(lines))
