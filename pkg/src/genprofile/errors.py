"""Exception hierarchy shared by all modules."""


class ProfilingError(Exception):
    """Base class for all package errors."""


class InsufficientDataError(ProfilingError, ValueError):
    pass


class InvalidGridError(ProfilingError, ValueError):
    pass


class DomainError(ProfilingError, ValueError):
    """Evaluation point or argument outside the admissible domain."""


class DegenerateSystemError(ProfilingError, ArithmeticError):
    pass


class RankDeficiencyError(DegenerateSystemError):
    def __init__(self, rank: int, ncols: int):
        super().__init__(f"matrix is rank deficient: numerical rank {rank} < {ncols} columns")
        self.rank = rank
        self.ncols = ncols


class InvalidModelError(ProfilingError, ValueError):
    pass


class DivergenceError(ProfilingError, ArithmeticError):
    pass


class InvalidStartError(ProfilingError, ValueError):
    pass


class DataLossError(ProfilingError, ArithmeticError):
    """A data log-density term was not finite."""

    def __init__(self, species: int, index: int, value: float):
        super().__init__(
            f"non-finite log-density {value!r} for species {species}, observation {index}"
        )
        self.species = species
        self.index = index


class FitError(ProfilingError):
    """A fit aborted; ``partial`` carries whatever history was recorded."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class DatasetParseError(ProfilingError, ValueError):
    """Malformed dataset file; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
