"""Exception types raised by the simulator."""


class SpinSqueezeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SpinSqueezeError, ValueError):
    pass


class BudgetExceededError(SpinSqueezeError, MemoryError):
    """A run would need more memory than the configured budget allows."""

    def __init__(self, required_bytes: int, budget_bytes: int, what: str = "run"):
        self.required_bytes = int(required_bytes)
        self.budget_bytes = int(budget_bytes)
        super().__init__(
            f"{what} needs ~{required_bytes / 2**30:.3f} GiB "
            f"({required_bytes} bytes), budget is {budget_bytes / 2**30:.3f} GiB"
        )


class AccuracyError(SpinSqueezeError, ArithmeticError):
    """Propagation drifted beyond the accepted tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = float(residual)
        super().__init__(f"{message} (residual {residual:.3e})")


class NumericalError(SpinSqueezeError, ArithmeticError):
    pass


class DegenerateDirectionError(SpinSqueezeError, ValueError):
    """Mean spin vector too short to define a perpendicular plane."""


class NotBracketedError(SpinSqueezeError, ValueError):
    """The minimum of a trace sits on its boundary."""

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(message)


class TruncationError(SpinSqueezeError, ArithmeticError):
    """Boson population leaked into the top of the truncated Fock space."""
