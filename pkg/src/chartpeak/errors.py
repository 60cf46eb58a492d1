"""Exception hierarchy for the whole pipeline.

Every error derives from :class:`ChartpeakError`; the stage-level bases
(:class:`IngestError`, :class:`EnrichError`, ...) let the CLI map failures
to exit codes without enumerating leaf classes.
"""

from __future__ import annotations


class ChartpeakError(Exception):
    """Root of all pipeline errors; ``fold`` is set when raised inside a CV fold."""

    fold: int | None = None


# -- ingestion ---------------------------------------------------------------

class IngestError(ChartpeakError, ValueError):
    """Raised while parsing chart files or reducing the panel.

    ``source`` names the offending file when known.
    """

    def __init__(self, message: str, source: str | None = None):
        super().__init__(message)
        self.message = message
        self.source = source

    def __str__(self) -> str:
        if self.source:
            return f"{self.source}: {self.message}"
        return self.message


class RowParseError(IngestError):
    def __init__(self, message: str, row: int, source: str | None = None):
        super().__init__(f"row {row}: {message}", source)
        self.row = row


class MissingColumnError(IngestError):
    pass


class DuplicateRankError(IngestError):
    pass


class DuplicateEntryError(IngestError):
    pass


class EmptyFileError(IngestError):
    pass


class DuplicateDateError(IngestError):
    pass


class EmptyPanelError(IngestError):
    pass


class RankOutOfRangeError(IngestError):
    pass


# -- enrichment --------------------------------------------------------------

class EnrichError(ChartpeakError):
    """Base for client failures; ``batch_index`` is filled in by ``enrich_all``."""

    batch_index: int | None = None
    status: int | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        if self.batch_index is not None:
            return f"batch {self.batch_index}: {msg}"
        return msg


class InvalidBatchSizeError(EnrichError, ValueError):
    pass


class EmptyBatchError(EnrichError, ValueError):
    pass


class MissingCredentialsError(EnrichError):
    pass


class AuthFailedError(EnrichError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"token endpoint returned HTTP {status} {detail}".rstrip())
        self.status = status


class RetriesExhaustedError(EnrichError):
    def __init__(self, status: int, attempts: int):
        super().__init__(f"still throttled (HTTP {status}) after {attempts} attempts")
        self.status = status
        self.attempts = attempts


class MalformedBodyError(EnrichError):
    pass


class HttpError(EnrichError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status} {detail}".rstrip())
        self.status = status


# -- dataset -----------------------------------------------------------------

class DatasetError(ChartpeakError, ValueError):
    pass


class DuplicateFeatureRowError(DatasetError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class AllMissingColumnError(DatasetError):
    pass


class MissingAudioColumnError(DatasetError):
    pass


class ClassTooSmallError(DatasetError):
    pass


class BadKError(DatasetError):
    pass


class ClassSmallerThanKError(DatasetError):
    pass


class TooFewRowsError(DatasetError):
    pass


# -- learners / evaluation ---------------------------------------------------

class LearnerError(ChartpeakError, ValueError):
    pass


class LabelOutOfRangeError(LearnerError):
    pass


class EmptyTrainingError(LearnerError):
    pass


class KnnKTooLargeError(LearnerError):
    pass


class ColumnMismatchError(LearnerError):
    pass


class UnsupportedVariantError(LearnerError):
    pass


class EvaluationError(ChartpeakError, ValueError):
    pass


class LengthMismatchError(EvaluationError):
    pass


class EmptyMatrixError(EvaluationError):
    pass


class EmptyGridError(EvaluationError):
    pass
