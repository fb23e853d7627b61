"""Exception types and CLI exit codes shared across the package."""


class TurboMORError(Exception):
    """Base class for all package errors."""


class NetlistError(TurboMORError):
    """Netlist syntax or validation failure, with source location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class BundleError(TurboMORError):
    """Matrix-bundle file inconsistency (dimensions, symmetry, B structure)."""


class NotPositiveDefiniteError(TurboMORError):
    """Cholesky pivot at or below the configured threshold.

    The pivot index is reported in the coordinates of the matrix that was
    handed to the factorization (not the permuted internal order).
    """

    def __init__(self, pivot_index, pivot_value):
        self.pivot_index = int(pivot_index)
        self.pivot_value = float(pivot_value)
        super().__init__(
            f"pivot {self.pivot_index} is not positive definite "
            f"(value {self.pivot_value:.3e})"
        )


class PromotionOverflowError(TurboMORError):
    """Too many internal rows needed promotion into the port block."""

    def __init__(self, promoted, limit):
        self.promoted = promoted
        self.limit = limit
        super().__init__(
            f"{promoted} promoted rows exceed the allowed limit of {limit}; "
            "the network interior is pathologically singular"
        )


class NumericalError(TurboMORError):
    """Singular system or failed factorization outside the promotion path."""


# CLI exit codes
EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4
