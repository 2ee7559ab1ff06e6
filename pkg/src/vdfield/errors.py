"""Exception hierarchy shared by all vdfield modules."""


class VdfieldError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(VdfieldError):
    """A value object violated one of its invariants."""


class DepthTooSmall(VdfieldError):
    """A point is behind (or numerically at) the camera plane."""


class OutsideRigMesh(VdfieldError):
    """A 2D query fell outside the rig mesh and clamping was disabled."""


class EmptyMask(VdfieldError):
    """Silhouette extraction got a mask with no foreground pixels."""


class RefinementDiverged(VdfieldError):
    """Mesh refinement exceeded its Steiner-vertex budget."""


class DegenerateTriangle(VdfieldError):
    """A rest triangle's edge matrix is singular."""


class DisconnectedFromHandles(VdfieldError):
    """A mesh component contains no handle vertex."""


class SolverFailure(VdfieldError):
    """An iterative solver exceeded its iteration budget."""


class ParseError(VdfieldError):
    """A model or document file could not be parsed.

    Carries ``offset`` (bytes) or ``line`` (1-based) when known.
    """

    def __init__(self, message, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line


class MissingProperty(ParseError):
    """A required per-vertex property is absent from a PLY file."""


class NonPSDCovariance(VdfieldError):
    """A covariance had an eigenvalue below the PSD tolerance."""


class SchemaVersionMismatch(VdfieldError):
    """A document file declares an unsupported schema version."""


class NothingVisible(VdfieldError):
    """A render produced no foreground pixels."""


class DeformationFailed(VdfieldError):
    """Too many primitives failed to evaluate during model deformation."""
