"""Shared error taxonomy.

Every harness error carries an ``exit_code`` so the CLI and the service layer
map failures consistently: 1 usage/empty input, 2 I/O or decode, 3
coverage/validation.
"""


class HarnessError(Exception):
    """Base class for all harness errors."""

    exit_code = 1


class UsageError(HarnessError):
    exit_code = 1


class DecodeError(HarnessError):
    """Undecodable or unreadable input media/files."""

    exit_code = 2


class CoverageError(HarnessError):
    """Validation or coverage failures (missing predictions, leaky splits)."""

    exit_code = 3


# --- audio ---

class MalformedRiff(DecodeError):
    pass


class UnsupportedEncoding(DecodeError):
    pass


class TruncatedData(DecodeError):
    pass


class EmptyTrack(UsageError):
    pass


class UnknownSample(CoverageError):
    pass


# --- manifests ---

class LayoutMismatch(DecodeError):
    pass


class UnknownMethodFolder(DecodeError):
    pass


class MissingMetadata(DecodeError):
    pass


class AnnotationParse(DecodeError):
    pass


class SchemaVersionMismatch(CoverageError):
    pass


class DuplicateSampleId(CoverageError):
    pass


class UnknownMethod(CoverageError):
    pass


# --- protocols ---

class TooFewIdentities(UsageError):
    pass


class MissingPhaseTag(UsageError):
    pass


class EmptyTestSet(CoverageError):
    pass


class EmptyTrainSet(CoverageError):
    pass


class DistinctDatasetsRequired(UsageError):
    pass


# --- metrics ---

class InvalidDistribution(UsageError):
    pass


class DegenerateLabels(UsageError):
    pass


class NoPositives(UsageError):
    pass


class MissingPrediction(CoverageError):
    def __init__(self, missing_ids):
        self.missing_ids = sorted(missing_ids)
        shown = ", ".join(self.missing_ids[:10])
        more = "" if len(self.missing_ids) <= 10 else f" (+{len(self.missing_ids) - 10} more)"
        super().__init__(f"missing predictions for: {shown}{more}")


class GroupMismatch(UsageError):
    pass


# --- sampling ---

class EmptyScores(UsageError):
    pass
