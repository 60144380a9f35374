"""Exception hierarchy shared by all modules."""


class RenReduceError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(RenReduceError, ValueError):
    pass


class ShapeError(RenReduceError, ValueError):
    pass


class DefectiveMatrixError(RenReduceError):
    """Eigenvalues closer than the distinctness tolerance."""

    def __init__(self, gap, threshold):
        self.gap = gap
        self.threshold = threshold
        super().__init__(
            f"eigenvalues not distinct: minimum gap {gap:.3e} < tolerance {threshold:.3e}"
        )


class RankError(RenReduceError):
    def __init__(self, message, rank=0):
        self.rank = rank
        super().__init__(message)


class InstabilityError(RenReduceError):
    def __init__(self, radius):
        self.radius = radius
        super().__init__(f"spectral radius {radius:.6g} >= 1, no stable solution")


class ShiftAtPoleError(RenReduceError):
    def __init__(self, z):
        self.z = z
        super().__init__(f"evaluation point {z} is (numerically) a pole of the system")


class UnboundedH2Error(RenReduceError):
    """Feedthrough terms differ, so the error system is not strictly proper."""


class IllConditionedProjectionError(RenReduceError):
    pass


class SchemaError(RenReduceError, ValueError):
    """Malformed package file; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class CertificateError(RenReduceError, ValueError):
    pass


class GenerationError(RenReduceError):
    def __init__(self, message, min_eig=None):
        self.min_eig = min_eig
        super().__init__(message)


class ReductionError(RenReduceError):
    def __init__(self, message, history=None):
        self.history = history
        super().__init__(message)


class WellPosednessError(RenReduceError):
    """The implicit equilibrium equation could not be solved."""


class DegenerateReferenceError(RenReduceError, ValueError):
    pass
