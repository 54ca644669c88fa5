"""Exception types shared across the package."""


class PolicyForestError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PolicyForestError):
    """Malformed schema definition (duplicate names, inverted bounds, ...)."""


class IngestError(PolicyForestError):
    """Corpus file cannot be read into records (missing column, bad cell)."""


class LabelingError(PolicyForestError):
    """Labeling or dataset splitting is impossible as requested."""


class ForestError(PolicyForestError):
    """Invalid training or prediction request."""


class ArtifactFileError(PolicyForestError):
    """A persisted artifact is corrupt, truncated, or of an unknown version."""


class SamplerError(PolicyForestError):
    """Invalid sampling request (bad bounds, non-positive count, ...)."""


class AnalysisError(PolicyForestError):
    """Analysis input does not support the requested computation."""


class PipelineError(PolicyForestError):
    """A pipeline stage cannot run (missing input, checksum conflict, ...)."""


class ConfigError(PolicyForestError):
    """Run configuration file or CLI flags are invalid."""
