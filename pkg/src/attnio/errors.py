"""Exception hierarchy shared across the package."""


class DegreeOverflowError(ValueError):
    """No admissible polynomial degree meets the requested accuracy."""


class EntriesTooLargeError(ValueError):
    """Score magnitudes are beyond what the polynomial scheme can approximate."""


class PositivityError(ArithmeticError):
    """An approximate softmax denominator came out non-positive."""


class CapacityError(ValueError):
    """A combinatorial object would exceed desk-scale size limits."""


class PlanningError(ValueError):
    """A schedule cannot be built for the requested parameters."""


class SimulationError(RuntimeError):
    """Base class for trace rejections raised by the I/O simulator."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class CapacityExceeded(SimulationError):
    pass


class OperandNotResident(SimulationError):
    pass


class LoadOfUnmaterialized(SimulationError):
    pass


class MissingOutput(SimulationError):
    pass
