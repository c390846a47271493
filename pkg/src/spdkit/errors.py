"""Exception types shared across spdkit.

Errors fall into two families: input errors (bad files, malformed or
non-symmetric data, dimension mismatches) and numerical errors (loss of
positive definiteness, singular triangles, Krylov breakdown).  The CLI maps
the first family to exit code 2 and the second to exit code 3.
"""


class SpdkitError(Exception):
    """Base class for all spdkit errors."""


class InputError(SpdkitError):
    """Bad user input: files, formats, dimensions."""


class NumericalError(SpdkitError):
    """Numerical failure: non-SPD data, singular solves, breakdown."""


class ParseError(InputError):
    """Malformed Matrix Market content (header, counts, duplicates)."""


class NotSymmetricReal(InputError):
    """Matrix Market file is not `matrix coordinate real symmetric`."""


class AsymmetricValues(InputError):
    """Explicit (i, j) and (j, i) entries disagree."""


class NonpositiveDiagonal(InputError):
    """A diagonal entry required to be positive is zero or negative."""


class DimensionMismatch(InputError):
    """Operands have incompatible shapes."""


class RhoNotOne(InputError):
    """Forward-error study requires the constant-coefficient operator."""


class NotSPD(NumericalError):
    """Cholesky failed; `pivot` is the 0-based index of the failing pivot."""

    def __init__(self, pivot, context=""):
        self.pivot = int(pivot)
        msg = f"matrix is not positive definite (pivot {self.pivot})"
        if context:
            msg += f" in {context}"
        super().__init__(msg)


class SingularTriangular(NumericalError):
    """Triangular solve hit a zero diagonal entry."""

    def __init__(self, index):
        self.index = int(index)
        super().__init__(f"triangular factor is singular at diagonal {self.index}")


class NonFinite(NumericalError):
    """NaN or Inf encountered where finite data is required."""


class Breakdown(NumericalError):
    """Conjugate-gradient breakdown: an inner product that must be positive
    for SPD operators came out nonpositive."""
