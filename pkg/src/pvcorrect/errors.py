"""Exception types raised across the package."""


class PvcError(Exception):
    """Base class for all errors raised by pvcorrect."""


class BoundsError(PvcError, IndexError):
    """A voxel index lies outside its grid."""


class GeometryError(PvcError, ValueError):
    """Invalid or inconsistent grid geometry."""


class AlignmentError(GeometryError):
    """Two grids that must coincide do not."""


class ContractError(PvcError, ValueError):
    """A caller violated an operation's precondition."""


class DomainError(PvcError, ValueError):
    """An argument lies outside a function's mathematical domain."""


class FormatError(PvcError, ValueError):
    """A file could not be parsed.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingTagError(FormatError):
    """A required DICOM attribute is absent."""

    def __init__(self, tag, path=None):
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required DICOM tag {tag}{where}")
        self.tag = tag
