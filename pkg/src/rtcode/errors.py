"""Exception types shared across the package."""


class SpecError(ValueError):
    """A problem instance or policy violates one of its invariants.

    ``field`` names the offending input so callers (and the CLI) can report
    a precise diagnostic.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class BudgetExceeded(RuntimeError):
    """An enumeration would evaluate more candidates than allowed."""

    def __init__(self, what, needed, budget):
        super().__init__(f"{what}: {needed} candidates exceed budget {budget}")
        self.needed = needed
        self.budget = budget
