"""Exception types shared across the toolkit."""


class GeometryError(ValueError):
    """Invalid geometric input (shape mismatch, non-orthonormal rotation, ...)."""


class DegenerateRays(GeometryError):
    """Ray map does not constrain a unique homography."""


class DegenerateFit(GeometryError):
    """A robust or closed-form fit has no unique solution."""


class VolumeTooLarge(GeometryError):
    """Requested voxel grid exceeds the configured voxel budget."""


class ParseError(ValueError):
    """Malformed file contents.

    ``offset`` is the byte position at which the reader gave up.
    """

    def __init__(self, offset, expected, found):
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(f"parse error at byte {offset}: expected {expected}, found {found}")
