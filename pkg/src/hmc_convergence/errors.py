"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input (dimension mismatch, bad parameter)."""


class DegenerateInputError(InputError):
    """Input on which the requested quantity is undefined, e.g. x == y."""


class OutOfContractError(InputError):
    """Arguments outside the validity region of a method."""


class UnsupportedMethodError(InputError):
    """Method not available for this kind of potential."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration ceiling."""
