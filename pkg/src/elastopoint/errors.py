"""Exception types shared across the package."""


class ElastoPointError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ElastoPointError):
    """A file could not be parsed; carries the path and (1-based) line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class DegenerateGeometryError(ElastoPointError):
    """Input geometry is degenerate (coplanar, zero extent, too few points)."""


class MeshError(ElastoPointError):
    """A tetrahedral mesh violates its structural invariants."""


class MaterialError(ElastoPointError):
    """Material parameters outside the admissible range."""


class SolverError(ElastoPointError):
    """The linear solver failed to converge or detected an indefinite system."""


class DatasetError(ElastoPointError):
    """Dataset artifacts are missing or inconsistent."""
