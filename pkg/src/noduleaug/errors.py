"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class IngestionError(PipelineError):
    """A dataset file is missing, unreadable, or references unknown ids."""


class GeometryError(PipelineError):
    """A patch, bbox, or footprint does not fit where it is required to."""


class InvariantError(PipelineError):
    """A domain-type invariant was violated (bad shapes, ranges, labels)."""


class TrainingDivergedError(PipelineError):
    """Training produced a non-finite loss; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
