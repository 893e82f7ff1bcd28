"""Exception hierarchy shared by the numerics, services, CLI and routes."""


class PsgHeatError(Exception):
    """Base class for all errors raised by psgheat"""

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        data = {'error': self.message, 'kind': type(self).__name__}
        data.update(self.details)
        return data


class ConfigurationError(PsgHeatError, ValueError):
    """Invalid experiment config or invalid domain-type parameters"""

    def __init__(self, message, issues=None, **details):
        super().__init__(message, issues=list(issues or []), **details)
        self.issues = list(issues or [])


class MeshMismatchError(PsgHeatError, ValueError):
    pass


class DimensionMismatchError(PsgHeatError, ValueError):
    pass


class SolverError(PsgHeatError, RuntimeError):
    """Conjugate gradients stopped at the iteration cap"""

    def __init__(self, message, iterations=None, residual=None, **details):
        super().__init__(message, iterations=iterations, residual=residual, **details)
        self.iterations = iterations
        self.residual = residual


class SamplingError(PsgHeatError, RuntimeError):
    pass


class IterationError(PsgHeatError, RuntimeError):
    """A PSG iteration failed; `iteration` is the index n of the failing step"""

    def __init__(self, message, iteration, **details):
        super().__init__(message, iteration=iteration, **details)
        self.iteration = iteration


class AnalysisError(PsgHeatError, ValueError):
    pass


class BiasScheduleError(ConfigurationError):
    """Bias schedule violates sum(tau_n * K_n) < inf or sup K_n < inf"""
