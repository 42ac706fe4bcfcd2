"""Exception hierarchy shared by every solver module."""


class CmdpError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CmdpError, ValueError):
    """A model, constraint or instance file violates an invariant."""

    def __init__(self, invariant: str, message: str, index=None):
        self.invariant = invariant
        self.index = index
        where = f" at {index}" if index is not None else ""
        super().__init__(f"{invariant}{where}: {message}")


class MissingPolicyEntry(CmdpError, KeyError):
    def __init__(self, h: int, state: int, budget):
        self.h, self.state, self.budget = h, state, budget
        super().__init__(f"no policy entry for (h={h}, state={state}, budget={list(budget)})")

    def __str__(self):
        return self.args[0]


class EmptySample(CmdpError, ValueError):
    pass


class NonFiniteValue(CmdpError, ArithmeticError):
    pass


class GridTooLarge(CmdpError):
    def __init__(self, required: int, cap: int, sizes=None):
        self.required, self.cap, self.sizes = required, cap, sizes
        detail = f" (per-dimension sizes {list(sizes)})" if sizes is not None else ""
        super().__init__(f"grid needs {required} entries, cap is {cap}{detail}")


class BudgetSpaceTooLarge(CmdpError):
    def __init__(self, cap: int, size: int, h: int):
        self.cap, self.size, self.h = cap, size, h
        super().__init__(
            f"budget space layer h={h} reached {size} vectors (cap {cap}); "
            "use the bicriteria solver instead of exact mode"
        )


class PartialCostSetTooLarge(CmdpError):
    def __init__(self, size: int, cap: int, h: int):
        self.size, self.cap, self.h = size, cap, h
        super().__init__(f"partial-cost sets at layer h={h} hold {size} entries (cap {cap})")


class TooManyPolicies(CmdpError):
    def __init__(self, count: int, cap: int):
        self.count, self.cap = count, cap
        super().__init__(f"{count} deterministic policies exceed the enumeration cap {cap}")


class NonpositiveBudget(CmdpError, ValueError):
    pass


class DegenerateInterval(CmdpError, ValueError):
    pass


class QuadratureFailure(CmdpError):
    pass


class UnsupportedCriterion(CmdpError, ValueError):
    pass


class TooLarge(CmdpError, ValueError):
    pass
