"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid parameter values or scenario configuration."""


class InvalidPeriodError(ValueError):
    """A sampling or integration period was not strictly positive."""


class HorizonTooLargeError(ValueError):
    """The MPC horizon is too long for full enumeration."""


class ShapeError(ValueError):
    """Fields or fluxes live on incompatible grids."""


class StarvedPopulationError(RuntimeError):
    """Too few loads are ON for the control law to be evaluated."""
