"""Exception hierarchy shared by all modules."""


class StripHomogError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(StripHomogError):
    """A hole touches the outer boundary or the lateral cut, or a curve is invalid."""


class OverlapError(GeometryError):
    """Dilated hole balls intersect."""


class DomainError(StripHomogError, ValueError):
    """An argument lies outside the domain of a closed-form function."""


class SingularityError(DomainError):
    """Evaluation at a logarithmic singularity."""


class PartitionError(StripHomogError):
    """Requested case does not match the Dirichlet/Robin hole partition."""


class ConvergenceError(StripHomogError):
    """An iterative procedure did not reach its tolerance."""


class MeshError(StripHomogError):
    """Base class for mesh generation and mesh I/O failures."""


class InfeasibleResolutionError(MeshError):
    """Target edge length too coarse for the hole size."""


class MeshQualityError(MeshError):
    """Minimum angle below the quality floor."""


class MeshParseError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshInvariantError(MeshError):
    """Mesh violates a structural invariant (orientation, manifoldness, closed loops)."""


class TagError(StripHomogError):
    """Boundary tags inconsistent with the requested assembly."""


class EllipticityError(StripHomogError):
    """Coefficient matrix is not symmetric positive definite at a sample point."""


class SingularSystemError(StripHomogError):
    """Linear system could not be factorized."""


class ResidualError(StripHomogError):
    """Solve finished but the residual contract was not met."""


class PointLocationError(StripHomogError):
    """A target point is outside the source mesh."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class MeshMismatchError(StripHomogError, ValueError):
    """Fields live on different meshes."""


class CompatibilityError(StripHomogError):
    """Neumann data violate the solvability condition."""


class CellQualityError(StripHomogError):
    """Far-field constant extraction is not converged."""


class DegenerateFitError(StripHomogError, ValueError):
    """Rate fit received zero or non-finite errors, or too few records."""


class ConfigError(StripHomogError, ValueError):
    """Invalid configuration."""
