"""Exception hierarchy shared by every module."""


class CarnotError(Exception):
    """Base class for all package errors."""


class InputError(CarnotError, ValueError):
    """Malformed or out-of-range input (dimension mismatch, bad id, bad parameter)."""


class UndefinedPointError(InputError):
    """Quantity requested at a point where it is not defined (e.g. a gauge gradient at 0)."""


class TruncationError(InputError):
    """Output box too small to hold the support of the rearranged field."""

    def __init__(self, message: str, required_radius: float):
        super().__init__(message)
        self.required_radius = required_radius


class StructureError(CarnotError):
    """The rearrangement structure (ball family / volume function) is violated."""


class NumericalError(CarnotError, RuntimeError):
    """A numerical procedure failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
