"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class NumericError(ArithmeticError):
    """Non-finite value where a finite one is required."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class VocabularyError(IndexError):
    """Token id outside the vocabulary."""


class DataError(ValueError):
    """Corpus or file content unusable for the requested operation."""
