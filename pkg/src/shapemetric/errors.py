class ShapeMetricError(Exception):
    """Base class for all errors raised by shapemetric."""


class MeshFormatError(ShapeMetricError, ValueError):
    """A mesh file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class MeshStructureError(ShapeMetricError, ValueError):
    """Mesh arrays violate an invariant (bad index, non-finite coordinate, ...)."""


class EmptyGeometryError(ShapeMetricError, ValueError):
    pass


class DegenerateGeometryError(ShapeMetricError, ValueError):
    pass


class GridDataError(ShapeMetricError, ValueError):
    pass


class ManifestError(ShapeMetricError, ValueError):
    pass
