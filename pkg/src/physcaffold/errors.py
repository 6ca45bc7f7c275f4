"""Exception types shared across the pipeline."""


class PhyscaffoldError(Exception):
    """Base class for all package errors."""


class ParseError(PhyscaffoldError):
    """Malformed geometry file (bad syntax, index out of range, truncated data)."""


class UnsupportedFormatError(PhyscaffoldError):
    """File format not recognized or not supported."""


class EmptyGeometryError(PhyscaffoldError):
    """Input contains no usable triangles / points."""


class MissingNormalsError(PhyscaffoldError):
    """Operation requires per-point normals that are absent."""


class ValidationError(PhyscaffoldError):
    """Parameter or configuration value outside its allowed range."""


class NotWatertightError(PhyscaffoldError):
    """Reconstructed mesh failed the watertightness check."""
