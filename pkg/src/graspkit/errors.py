"""Exception hierarchy shared across the toolkit.

Every error raised by graspkit derives from :class:`GraspkitError`, so callers
can catch the whole family with one clause. The CLI maps subfamilies onto
stable exit codes (see ``graspkit.cli``).
"""


class GraspkitError(Exception):
    """Base class for all toolkit errors."""


class RangeError(GraspkitError, ValueError):
    """A pose-vector component violates its documented bounds."""


class EncodingError(GraspkitError, ValueError):
    """A rotation cannot be reproduced by any in-range Euler triple."""


class DegenerateSceneError(GraspkitError, ValueError):
    """Scene geometry collapses (zero bounding-sphere radius)."""


class DimensionError(GraspkitError, ValueError):
    """Array shapes are incompatible (e.g. patch size does not divide image)."""


class EmptyAssignmentError(GraspkitError, ValueError):
    """An assignment with no matched pairs was passed to a pair-mean loss."""


class DomainError(GraspkitError, ValueError):
    """A numeric argument lies outside the open domain of a loss kernel."""


class EmptyGroundTruthError(GraspkitError, ValueError):
    """Coverage rate requires at least one ground-truth pose."""


class EmptyPredictionError(GraspkitError, ValueError):
    """Collision-free rate requires at least one predicted pose."""


class SubsetError(GraspkitError, ValueError):
    """A pruned set contains a pose absent from its claimed superset."""


class EmptyTargetsError(GraspkitError, ValueError):
    """A QA builder was called without any target object."""


class ParseError(GraspkitError, ValueError):
    """An answer string does not match its template; carries the failing anchor."""

    def __init__(self, message: str, anchor: str = ""):
        super().__init__(message)
        self.anchor = anchor


class UnknownDescriptorError(GraspkitError, ValueError):
    """Strict-mode parsing met a descriptor missing from the library."""


class FormatError(GraspkitError, ValueError):
    """A file does not conform to its documented format; carries a byte offset."""

    def __init__(self, message: str, offset: int = -1):
        super().__init__(message)
        self.offset = offset


class ValidationError(GraspkitError, ValueError):
    """A loaded record violates a documented invariant; names the invariant."""


class DuplicateIdError(GraspkitError, ValueError):
    """Identifier sequence handed to the splitter contains duplicates."""


class MissingConfidenceError(GraspkitError, ValueError):
    """Confidence-based candidate selection needs confidence scores."""


class UnknownTargetError(GraspkitError, ValueError):
    """A requested target category is absent from the scene's object list."""
