"""Exception types shared across the toolkit."""


class ExsrError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ExsrError):
    """A config is internally inconsistent or incompatible with an input."""


class ShapeError(ExsrError):
    """Tensor dimensions do not match what an operation requires."""


class DependencyError(ExsrError):
    """An external component (e.g. a feature extractor) failed."""


class IngestionError(ExsrError):
    """Dataset ingestion produced nothing usable."""


class TrainingDiverged(ExsrError):
    """A loss became non-finite; a diagnostic snapshot was written."""

    def __init__(self, message: str, snapshot_path: str | None = None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
