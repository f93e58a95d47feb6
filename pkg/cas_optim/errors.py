class CasOptimError(ValueError):
    pass


class DegeneratePmf(CasOptimError):
    pass


class DimensionError(CasOptimError):
    pass


class GridError(CasOptimError):
    pass


class TruncationError(CasOptimError):
    def __init__(self, message: str, lost_mass: float):
        super().__init__(message)
        self.lost_mass = lost_mass


class InfeasibleError(CasOptimError):
    pass


class InvariantViolation(CasOptimError):
    pass


class ConfigError(CasOptimError):
    pass
