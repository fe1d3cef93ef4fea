class SippError(RuntimeError):
    exit_code: int = 2


class UsageError(SippError):
    exit_code = 1


class ConfigError(UsageError):
    pass


class DataFormatError(SippError):
    exit_code = 2


class DimensionMismatchError(DataFormatError):
    def __init__(self, expected: int, actual: int, context: str = "vector"):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{context} dimension mismatch: expected dim {expected}, got dim {actual}"
        )


class AcceptanceError(SippError):
    exit_code = 3


class TuningError(AcceptanceError):
    def __init__(self, message: str, best_recall: float):
        self.best_recall = best_recall
        super().__init__(f"{message} (best recall achieved: {best_recall:.4f})")
