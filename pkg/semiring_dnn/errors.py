class SemiringDomainError(ValueError):
    pass


class MatrixConstructionError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class UnsupportedKernelError(ValueError):
    pass


class AnalysisError(ValueError):
    pass


class MatrixMarketParseError(ValueError):
    """Raised when a Matrix Market file breaks the format, `line` is 1-based"""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class MalformedHeaderError(MatrixMarketParseError):
    pass


class MalformedEntryError(MatrixMarketParseError):
    pass


class IndexOutOfBoundsError(MatrixMarketParseError):
    pass


class DuplicateEntryError(MatrixMarketParseError):
    pass


class TruncatedFileError(MatrixMarketParseError):
    pass
