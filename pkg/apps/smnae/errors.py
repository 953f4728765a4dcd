"""Exception hierarchy shared by the library, the CLI and the HTTP service."""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class SmnaeError(Exception):
    """Base class for every error raised on purpose by this package."""

    exit_code = 1
    http_status = 500


class ValidationError(SmnaeError):
    """Input does not satisfy a precondition (shape, range, file format, data volume)."""

    exit_code = EXIT_VALIDATION
    http_status = 400


class DimensionError(ValidationError):
    """Operands are not conformable."""


class DataFormatError(ValidationError):
    """A file on disk is malformed (PGM, CSV, IDX, model container)."""


class NumericalError(SmnaeError):
    """NaN/Inf appeared, training diverged or a numerical check failed."""

    exit_code = EXIT_NUMERICAL
    http_status = 500
