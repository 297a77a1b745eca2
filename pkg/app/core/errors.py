"""Typed errors raised by the toolkit.

Every error carries the exit code the CLI reports for it.
"""


class ReturnStatsError(Exception):
    exit_code = 1


class ConfigError(ReturnStatsError):
    """Inputs that cannot be simulated as given; the message says what to change."""

    exit_code = 2


class RepresentationMismatchError(ConfigError):
    pass


class ExactnessBudgetError(ConfigError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(
            f"exact representation supports {available} iterates but {requested} were requested; "
            f"sample the point with a longer horizon"
        )


class MeasureUnderflowError(ConfigError):
    def __init__(self, rho: float, orbit_length: int):
        self.rho = rho
        self.orbit_length = orbit_length
        super().__init__(
            f"no orbit point of {orbit_length} fell in the ball of radius {rho}; "
            f"enlarge the Birkhoff length or the radius"
        )


class IntervalBudgetError(ConfigError):
    def __init__(self, n: int, pieces: int, budget: int):
        self.n = n
        self.pieces = pieces
        super().__init__(
            f"image after {n} iterates has {pieces} pieces (budget {budget}); use a smaller n"
        )


class InsufficientDataError(ConfigError):
    pass


class EmptyCylinderError(ConfigError):
    pass


class TowerParameterError(ConfigError):
    pass


class AllCentersExcludedError(ConfigError):
    def __init__(self, rho: float, candidates: int):
        self.rho = rho
        super().__init__(
            f"all {candidates} candidate centers at rho={rho} have very short returns; "
            f"use a smaller a_frak or a larger rho"
        )


class HypothesisViolationError(ReturnStatsError):
    """A hypothesis of the Poisson bound does not hold; the message names the inequality."""

    exit_code = 3


class OutputError(ReturnStatsError):
    exit_code = 4

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"cannot write {self.path}: {reason}")
