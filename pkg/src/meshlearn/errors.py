"""Exception hierarchy shared across the package."""


class MeshError(ValueError):
    """Base class for invalid mesh data."""


class ObjParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonManifoldError(MeshError):
    pass


class WindingError(MeshError):
    pass


class DegenerateFaceError(MeshError):
    pass


class ShapeError(ValueError):
    """Tensor or feature shapes do not agree."""


class InvalidCollapseError(ValueError):
    pass


class PoolExhaustedError(RuntimeError):
    """No valid collapse remains before the target edge count is reached."""

    def __init__(self, achieved, target):
        self.achieved = achieved
        self.target = target
        super().__init__(
            f"pooling exhausted at {achieved} edges (target {target}): no valid collapse left"
        )


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    pass
