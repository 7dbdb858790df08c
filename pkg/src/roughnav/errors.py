"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid argument values or incompatible shapes."""


class DomainError(ValueError):
    """Query outside the supported domain (e.g. off the terrain grid)."""


class FormatError(ValueError):
    """Malformed or truncated file content."""


class GenerationBudgetError(RuntimeError):
    """Rejection sampling could not fill its quota within the attempt budget."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
