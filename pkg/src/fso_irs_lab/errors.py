"""Exception hierarchy shared by every module of the package."""


class FsoIrsError(Exception):
    """Base class for all errors raised by :mod:`fso_irs_lab`."""


class DomainError(FsoIrsError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DegenerateGeometryError(DomainError):
    """The surface sits on the Tx--Rx line, so the incidence angle vanishes."""


class ConvergenceError(FsoIrsError, RuntimeError):
    """A numerical integrator or root finder failed to reach its tolerance."""


class OscillationBudgetError(ConvergenceError):
    """Direct quadrature would need more phase cycles than its budget allows."""


class ScenarioError(FsoIrsError, ValueError):
    """A scenario file failed to parse or validate."""
