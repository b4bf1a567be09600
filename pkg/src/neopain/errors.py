"""Exception hierarchy shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---------------------------------------------------------------

class EmptyVideo(PipelineError):
    pass


class BadRate(PipelineError):
    pass


class UnsortedMarkers(PipelineError):
    pass


class MarkerOutOfRange(PipelineError):
    pass


class ScoreOutOfRange(PipelineError):
    pass


class ParseError(PipelineError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateRow(PipelineError):
    pass


class MissingFile(PipelineError):
    pass


# --- detect ---------------------------------------------------------------

class DegenerateBox(PipelineError):
    pass


# --- model / temporal -----------------------------------------------------

class ShapeMismatch(PipelineError):
    pass


class WeightShapeMismatch(PipelineError):
    pass


class UnnormalizedInput(PipelineError):
    pass


class IncompleteSpec(PipelineError):
    pass


class EmptyDataset(PipelineError):
    pass


class FeatureLengthMismatch(PipelineError):
    pass


class TooFewFrames(PipelineError):
    pass


class SingleClassDataset(UserWarning):
    """Training set contains one class only; training proceeds."""


# --- eval -----------------------------------------------------------------

class TooFewSubjects(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


class EmptyInput(PipelineError):
    pass


class SingleClass(PipelineError):
    pass


class ZeroVariance(PipelineError):
    pass


class DegenerateMarginals(PipelineError):
    pass


class LeakageError(PipelineError):
    pass


# --- synth / config -------------------------------------------------------

class BadConfig(PipelineError):
    pass
