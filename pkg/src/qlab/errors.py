"""Exception hierarchy shared by all qlab modules."""


class QLabError(Exception):
    """Base class for all qlab errors."""


class MetricDegenerate(QLabError):
    """Metric matrix is not positive definite where it must be."""


class MeasureDegenerate(QLabError):
    """Volume density is not strictly positive on the grid."""


class OutOfDomain(QLabError):
    """A point, ball or image leaves the computational box."""


class EmptyMask(QLabError):
    """A mask has no interior nodes."""


class NonConvergence(QLabError):
    """Iterative solver exhausted its iteration budget."""


class LineSearchStall(QLabError):
    """Backtracking line search failed to produce sufficient decrease."""


class ProbeUnderflow(QLabError):
    """Too few in-domain samples on a distortion probe shell."""


class MatrixSingular(QLabError):
    """Coordinate frame matrix is singular at every candidate radius."""


class ContactViolation(QLabError):
    """Push-forward of a horizontal vector leaves the horizontal bundle."""


class MasksOverlap(QLabError):
    """Condenser plates E and F are not disjoint."""


class DegenerateCondenser(QLabError):
    """Condenser plates touch; the capacity diverges under refinement."""
