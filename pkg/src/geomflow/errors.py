"""Exception hierarchy shared across the package."""


class GeomflowError(Exception):
    """Base class for all errors raised by geomflow."""


class DegenerateElementError(GeomflowError):
    """An element measure is zero (or negative) where strict positivity is required."""

    def __init__(self, element, point, measure):
        self.element = element
        self.point = point
        self.measure = measure
        super().__init__(
            f"degenerate element {element}: measure {measure:.3e} at reference "
            f"point {point} (nondegeneracy assumption violated)"
        )


class WellPosednessError(GeomflowError):
    """The saddle-point system is singular (nonparallel assumption violated)."""


class NonConvergenceError(GeomflowError):
    """An iterative procedure failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class QuadratureOrderError(GeomflowError):
    """A quadrature rule does not meet the exactness order a formula requires."""


class ConfigError(GeomflowError):
    """Invalid experiment or scheme configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
