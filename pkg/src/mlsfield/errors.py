"""Exception types shared across the package."""


class MlsFieldError(Exception):
    """Base class for package-specific errors."""


class ParseError(MlsFieldError):
    """A point-cloud or mesh file could not be parsed.

    Carries the offending path and, when known, the line or record index.
    """

    def __init__(self, message: str, path=None, line=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if line is not None:
            detail = f"{detail} (line {line})"
        super().__init__(detail)
        self.path = path
        self.line = line


class EmptyInputError(MlsFieldError):
    """A file or argument that must contain points contained none."""


class DegenerateExtentError(MlsFieldError):
    """All input points coincide, so no meaningful scale exists."""


class DegenerateWeightsError(MlsFieldError):
    """Every blending weight in a neighborhood underflowed to zero."""


class DegenerateMeshError(MlsFieldError):
    """A mesh has no area to sample from."""


class TrainingDivergedError(MlsFieldError):
    """The epoch-mean loss became non-finite; training was aborted.

    ``snapshot_path`` points at the diagnostic checkpoint written just
    before aborting (``None`` if writing it also failed).
    """

    def __init__(self, message: str, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


class ConfigurationError(MlsFieldError):
    """Invalid or contradictory run configuration."""
