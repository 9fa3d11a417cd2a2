"""Exception hierarchy shared by all bandinterp modules."""


class BandInterpError(Exception):
    """Base class for every error raised by this package."""


class DegenerateLattice(BandInterpError):
    pass


class UnsupportedLattice(BandInterpError):
    pass


class SingularMap(BandInterpError):
    pass


class OutOfDomain(BandInterpError):
    pass


class GeometryError(BandInterpError):
    pass


class MeshQualityFailure(BandInterpError):
    pass


class AssemblyError(BandInterpError):
    pass


class SolverFailure(BandInterpError):
    pass


class DegenerateEigenvalue(BandInterpError):
    pass


class RankDeficiency(BandInterpError):
    pass


class SingularVandermonde(BandInterpError):
    pass


class OptimizationStalled(BandInterpError):
    pass


class FoldFailure(BandInterpError):
    pass


class CacheCorruption(BandInterpError):
    pass


class SchemaError(BandInterpError):
    """Malformed configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(BandInterpError):
    """One or more semantically invalid configuration values."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))
