"""Exception types shared across the package."""


class CrosslocError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrosslocError):
    """Invalid rig / satellite / scene configuration."""


class HorizonError(CrosslocError):
    """Ray does not intersect the ground plane (pixel at or above the horizon)."""


class FormatError(CrosslocError):
    """Malformed pyramid file. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class EmptyRegion(CrosslocError):
    """No confidence cell survives the below-principal-point mask."""


class NotVisible(CrosslocError):
    """Ground point is outside every camera's field of view."""


class DegenerateSystem(CrosslocError):
    """Too few active residuals to constrain the 3-DoF pose."""


class SingularHessian(CrosslocError):
    """Damped normal matrix is not invertible. Carries a condition estimate."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition
