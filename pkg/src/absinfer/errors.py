"""Exception hierarchy shared by all modules."""


class AbsInferError(Exception):
    """Base class for every error raised by this package."""


class ModelError(AbsInferError):
    pass


class CyclicGraph(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class RowSumViolation(ModelError):
    def __init__(self, variable, parent_config, total):
        self.variable = variable
        self.parent_config = tuple(parent_config)
        self.total = total
        super().__init__(
            f"rows of {variable!r} must sum to 1: parent configuration "
            f"{self.parent_config} sums to {total!r}"
        )


class EmptyDomain(AbsInferError):
    pass


class DomainMismatch(AbsInferError):
    pass


class ScopeMismatch(AbsInferError):
    pass


class ImpossibleEvidence(AbsInferError):
    """The evidence has probability zero; ``variable`` is the first emptied domain."""

    def __init__(self, variable):
        self.variable = variable
        super().__init__(f"evidence is impossible: no value of variable {variable} survives")


class CautiousnessViolation(AbsInferError):
    pass


class BudgetExceeded(AbsInferError):
    pass


class InvalidPedigree(AbsInferError):
    pass


class InvalidObservation(AbsInferError):
    pass


class InvalidScan(AbsInferError):
    pass


class ParseError(AbsInferError):
    pass
