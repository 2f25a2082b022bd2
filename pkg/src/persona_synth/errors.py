"""Exception hierarchy for the package.

Every error raised on purpose derives from :class:`PersonaSynthError`, so the
CLI can catch one type and exit nonzero.
"""


class PersonaSynthError(Exception):
    """Base class for all errors raised by persona_synth."""


class SchemaError(PersonaSynthError):
    """Invalid attribute schema, question or survey config document."""


class IngestError(PersonaSynthError):
    """Malformed or inconsistent benchmark file."""


class ValidationError(PersonaSynthError):
    """An input violates a documented invariant (bad distribution, shape mismatch...)."""


class CalibrationError(PersonaSynthError):
    """Calibration cannot proceed on the given inputs."""


class InfeasibleTargetError(CalibrationError):
    """A target requires mass where the seed has none (or vice versa)."""


class BackendError(PersonaSynthError):
    """A response backend failed to produce a usable profile."""

    def __init__(self, message: str, raw_output: str | None = None):
        super().__init__(message)
        self.raw_output = raw_output


class ConfigurationError(PersonaSynthError):
    """Missing credential, endpoint or flag required for the requested run."""


class TransportError(PersonaSynthError):
    """The LLM endpoint could not be reached or returned a failure status."""


class PromptError(PersonaSynthError):
    """A prompt template cannot be rendered from the given context."""


class DistributionParseError(PersonaSynthError):
    """Model output could not be parsed into a valid response distribution."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class EvaluationError(PersonaSynthError):
    """Metric inputs are inconsistent (mismatched groups, responses or weights)."""


class PipelineError(PersonaSynthError):
    """A run directory is incomplete or a pipeline step cannot be assembled."""
