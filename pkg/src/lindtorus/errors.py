"""Exception types shared across the package."""


class BudgetError(RuntimeError):
    """A configured enumeration or table budget would be exceeded.

    Raised instead of silently truncating a computation.
    """


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists every violation found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class PropertyOneViolation(ArithmeticError):
    """A renormalised propagator could not be formed (singular matrix)."""
