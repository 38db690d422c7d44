"""Exception hierarchy shared across the pipeline.

Every public error carries a short machine-readable ``code`` that the CLI
prints on a dedicated stderr line and maps to a distinct exit status.
"""


class PipelineError(Exception):
    """Base class for all recoverable pipeline errors."""

    code = "E_INTERNAL"
    exit_status = 2


class InputFileError(PipelineError):
    """A required input file is missing or unreadable."""

    code = "E_IO"
    exit_status = 3


class ParseError(PipelineError):
    """Malformed file content, bad configuration value, or corrupt data."""

    code = "E_PARSE"
    exit_status = 4


class IngestionError(ParseError):
    """Meter rows that cannot be placed on the calendar (duplicates, bad channels)."""


class DataQualityError(ParseError):
    """Data violates quality thresholds (for example too many sign clamps)."""


class ConfigurationError(ParseError):
    """Invalid configuration or contract violation detected before compute."""


class WeatherError(PipelineError):
    """Unknown weather condition without a configured fallback group."""

    code = "E_WEATHER"
    exit_status = 5


class CoverageError(PipelineError):
    """Insufficient temporal coverage: missing weather days, degenerate days."""

    code = "E_COVERAGE"
    exit_status = 6


class InsufficientPoolError(CoverageError):
    """Too few valid candidates to apply a selection rule."""


class NoTruthError(PipelineError):
    """Validation requested but no customer exposes a total-generation meter."""

    code = "E_NOTRUTH"
    exit_status = 7


class InfeasibleError(PipelineError):
    """A scenario target that cannot be met was treated as fatal."""

    code = "E_INFEASIBLE"
    exit_status = 8
