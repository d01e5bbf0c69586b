"""Exception hierarchy.

Every error carries a short ``code`` so the CLI can print a single
machine-parseable line per failure.
"""


class WeedsegError(Exception):
    code = "error"


class InvariantError(WeedsegError, ValueError):
    code = "invariant"


class ShapeMismatchError(WeedsegError, ValueError):
    code = "shape_mismatch"


class BandTagError(WeedsegError, KeyError):
    code = "band_tag"

    def __str__(self):
        # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class ImageFormatError(WeedsegError, ValueError):
    code = "image_format"


class DegenerateImageError(WeedsegError, ValueError):
    """Raised for zero-variance inputs (Otsu, correlation)."""

    code = "degenerate"


class NoSimilarityError(WeedsegError, ValueError):
    """Correlation peak below the confidence threshold."""

    code = "no_similarity"


class EmptyIntersectionError(WeedsegError, ValueError):
    code = "empty_intersection"


class MissingClassError(WeedsegError, ValueError):
    code = "missing_class"


class NonFiniteLossError(WeedsegError, FloatingPointError):
    code = "non_finite_loss"


class SchemaError(WeedsegError, ValueError):
    code = "schema"


class MissingFileError(WeedsegError, FileNotFoundError):
    code = "missing_file"


class CheckpointError(WeedsegError, ValueError):
    code = "checkpoint"
