"""Exception types shared across the laboratory."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class BranchPointError(ContractViolation):
    """A branch inverse was requested at (or a curve passed through) a branch point."""


class DivergentIntegralError(ArithmeticError):
    """The requested integral or norm is infinite; no number is returned."""
