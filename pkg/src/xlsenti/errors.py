"""Exception hierarchy shared by every stage of the pipeline."""


class XlsentiError(Exception):
    """Base class for toolkit errors."""


class CorpusFormatError(XlsentiError):
    """A corpus file does not match its column mapping."""


class RowError(XlsentiError):
    def __init__(self, path, row_number, message):
        super().__init__(f"{path}: row {row_number}: {message}")
        self.path = path
        self.row_number = row_number


class DomainError(XlsentiError, ValueError):
    """A value lies outside the domain an operation accepts."""


class StratificationError(XlsentiError):
    pass


class ConfigurationError(XlsentiError):
    """Scenario, pool, or config file does not fit together."""


class ShapeError(XlsentiError, ValueError):
    pass


class AssetError(XlsentiError):
    """The pretrained encoder could not be resolved."""


class ExhaustionError(XlsentiError):
    pass


class DivergenceError(XlsentiError):
    def __init__(self, step, task, loss):
        super().__init__(f"non-finite loss {loss!r} at step {step} (task {task})")
        self.step = step
        self.task = task
        self.loss = loss


class StateError(XlsentiError):
    pass


class ReconciliationError(XlsentiError):
    def __init__(self, deltas):
        lines = ", ".join(f"{k}: {v:+d}" for k, v in deltas.items())
        super().__init__(f"reconciliation mismatch: {lines}")
        self.deltas = deltas
