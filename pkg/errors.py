"""Exception hierarchy shared by every contraction path."""


class TNError(Exception):
    """Base class for toolkit failures."""


class BudgetExceededError(TNError):
    def __init__(self, what, needed, budget):
        self.what = what
        self.needed = needed
        self.budget = budget
        super().__init__(f'{what} needs {needed:.6g} but the budget is {budget:.6g}')


class NetworkFormatError(TNError):
    """A network document violates the schema; `location` is a JSON path."""

    def __init__(self, location, message):
        self.location = location
        super().__init__(f'{location}: {message}')


class ZeroNetworkError(TNError):
    """Some swallowing step has an all-zero operator, so the value is exactly 0."""

    def __init__(self, step):
        self.step = step
        super().__init__(f'swallowing operator at step {step} is identically zero')


class ConsistencyError(TNError):
    """Two formulas for the same quantity disagree beyond tolerance."""
