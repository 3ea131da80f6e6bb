"""Exception hierarchy shared by every module of the toolkit."""


class FuelError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(FuelError, ValueError):
    pass


class IntegrabilityViolation(FuelError, ArithmeticError):
    """The discounted moment denominator is not positive."""


class TailBoundError(FuelError):
    """The truncated horizon leaves a tail larger than the allowed tolerance."""


class InfeasibleInitialization(FuelError, ValueError):
    """Initial capacities exhaust (or exceed) the initial fuel."""


class UnsupportedModel(FuelError):
    pass


class UnstableDiscretization(FuelError):
    """Lattice branching probability falls outside (0, 1)."""


class BudgetExceeded(FuelError, MemoryError):
    def __init__(self, required_bytes: int, budget_bytes: int):
        self.required_bytes = int(required_bytes)
        self.budget_bytes = int(budget_bytes)
        super().__init__(
            f"state space needs ~{self.required_bytes / 2**20:.1f} MiB, "
            f"budget is {self.budget_bytes / 2**20:.1f} MiB"
        )
