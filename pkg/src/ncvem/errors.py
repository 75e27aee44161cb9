"""Exception types shared across the solver stack."""


class NcvemError(Exception):
    """Base class for all ncvem errors."""


# --- mesh ---------------------------------------------------------------

class NonSimpleCell(NcvemError):
    """A cell's vertex loop self-intersects."""


class DanglingVertexReference(NcvemError):
    """A cell references a vertex index outside the vertex list."""


class NegativeArea(NcvemError):
    """A cell loop is clockwise (signed area <= 0)."""


class DegenerateSeedConfiguration(NcvemError):
    """Two Voronoi seeds coincide within tolerance."""


class InvertedCell(NcvemError):
    """A perturbed cell ended up with non-positive area."""


class TriangulationFailure(NcvemError):
    """Ear clipping could not triangulate a (degenerate) polygon."""


# --- poly ---------------------------------------------------------------

class QuadratureOrderTooLow(NcvemError):
    """Quadrature rule cannot integrate the requested products exactly."""


# --- vem element --------------------------------------------------------

class SingularProjectorSystem(NcvemError):
    """The local projector system is singular (degenerate cell)."""


# --- assembly -----------------------------------------------------------

class InconsistentBoundaryData(NcvemError):
    """Boundary data not evaluable on some boundary edge."""


# --- linear solver ------------------------------------------------------

class IndexOutOfRange(NcvemError):
    """Triplet index outside the declared matrix dimensions."""


class DimensionMismatch(NcvemError):
    """Operand shapes are incompatible."""


class SingularMatrix(NcvemError):
    """Factorization hit a pivot below the relative tolerance."""


class SolverBreakdown(NcvemError):
    """The iterative solver broke down (e.g. non-symmetric input)."""


class SizeLimitExceeded(NcvemError):
    """Dense operation requested on a matrix above the size cap."""


class ToleranceNotReached(NcvemError):
    """Solver stopped before reaching the requested residual."""

    def __init__(self, message, x=None, iterations=0, residual=float("inf")):
        super().__init__(message)
        self.x = x
        self.iterations = iterations
        self.residual = residual


# --- cli ----------------------------------------------------------------

class UnknownFlag(NcvemError):
    """Unrecognized configuration key."""


class InvalidValue(NcvemError):
    """Configuration value outside its allowed range."""
