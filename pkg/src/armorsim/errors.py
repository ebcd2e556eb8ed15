"""Exception types shared across the solver stages."""


class ArmorSimError(Exception):
    """Base class for all package errors."""


class UnknownMaterialError(ArmorSimError, KeyError):
    def __init__(self, name, available):
        self.name = name
        self.available = tuple(available)
        super().__init__(f"unknown catalog entry {name!r}; available: {', '.join(self.available)}")

    def __str__(self):
        return self.args[0]


class InsufficientDataError(ArmorSimError, ValueError):
    pass


class FitError(ArmorSimError, RuntimeError):
    """The least-squares objective has no interior minimum on the bracket."""


class ModelBreakdownError(ArmorSimError, ArithmeticError):
    """The jet closure produced a non-physical geometry.

    ``quantity`` names the offending expression and ``value`` is its value.
    """

    def __init__(self, quantity, value):
        self.quantity = quantity
        self.value = value
        super().__init__(f"model breakdown: {quantity} = {value!r}")


class ConvergenceError(ArmorSimError, RuntimeError):
    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__(message)


class GeometryError(ArmorSimError, ValueError):
    pass


class CFLViolationError(ArmorSimError, ValueError):
    def __init__(self, dt, dt_max):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"time step {dt:.3e} s exceeds stability limit {dt_max:.3e} s")


class NonFiniteStateError(ArmorSimError, FloatingPointError):
    pass


class ConfigError(ArmorSimError, ValueError):
    """Schema violation in a scenario document; ``path`` is the key path."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.line = line
        loc = path or "<root>"
        if line is not None:
            loc = f"{loc} (line {line})"
        super().__init__(f"{loc}: {message}")


class StageError(ArmorSimError):
    """A sub-solver failure labelled with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
