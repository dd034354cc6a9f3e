"""Exception hierarchy shared by every module of the package."""


class BiharmError(Exception):
    """Base class for all errors raised by :mod:`biharm`."""


class InputError(BiharmError):
    """Malformed user input (domain files, run configurations)."""


class DomainError(InputError):
    pass


class DisconnectedDomain(DomainError):
    pass


class OverlappingCells(DomainError):
    pass


class BadDimension(DomainError):
    pass


class DomainFileError(DomainError):
    """Parse or validation failure in a domain file.

    ``line`` is 1-based, or ``None`` when no position is known.
    """

    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class NonFiniteValue(BiharmError):
    pass


class RefinementOverflow(InputError):
    pass


class BadMultiIndex(BiharmError):
    pass


class SolverError(BiharmError):
    """Numerical failure inside an eigensolver or root finder."""


class MassNotPD(SolverError):
    pass


class ConvergenceFailure(SolverError):
    pass


class CountTooLarge(InputError):
    pass


class ZeroVector(BiharmError):
    pass


class NoZeroFound(SolverError):
    def __init__(self, message, best_residual=None):
        self.best_residual = best_residual
        super().__init__(message)


class NotOdd(BiharmError):
    pass


class SymmetryMissing(InputError):
    pass


class MeshMismatch(BiharmError):
    pass


class RankDeficientSubspace(SolverError):
    pass


class KernelDefect(BiharmError):
    pass


class NonMonotoneLadder(InputError):
    pass


class IoFailure(BiharmError):
    """An output file could not be written."""
