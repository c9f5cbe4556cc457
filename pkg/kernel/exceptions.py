"""Exception hierarchy shared by the geometry and analysis modules."""


class KernelError(Exception):
    """Base class for every error raised by the kernel."""


class CurveDomainError(KernelError, ValueError):
    """A curve parameter lies outside the knot range."""


class UnsupportedDerivativeOrder(KernelError, ValueError):
    pass


class RegularityError(KernelError, ValueError):
    """A path has a vanishing tangent where a frame is needed."""


class SketchValidationError(KernelError, ValueError):
    """A sketch contour is open or self-intersecting."""


class ParameterError(KernelError, ValueError):
    """A primitive or operation received inconsistent parameters."""


class ConstructionError(KernelError):
    """A construction history step could not be applied."""

    def __init__(self, message, step_index=None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class SceneError(KernelError):
    """A scene document failed to parse or validate; ``path`` locates the node."""

    def __init__(self, message, path=''):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnsupportedBoundaryCondition(KernelError):
    pass


class SingularSystemError(KernelError):
    """The constrained stiffness matrix still has free rigid-body modes."""

    def __init__(self, free_modes):
        self.free_modes = free_modes
        super().__init__(
            f"singular system: {free_modes} unconstrained rigid-body mode(s)"
        )


class SolverError(KernelError):
    """The iterative solver did not reach its tolerance."""

    def __init__(self, message, residuals=()):
        self.residuals = list(residuals)
        super().__init__(message)
