"""Exception hierarchy shared by all hydronls modules."""


class HydroNLSError(Exception):
    """Base class; carries a short machine-readable ``code``."""

    code = "error"


class GridError(HydroNLSError, ValueError):
    code = "grid"


class ShootingError(HydroNLSError, RuntimeError):
    code = "shooting"


class ValidityError(HydroNLSError, ValueError):
    """Evaluation requested at or beyond a singularity of the time flow."""

    code = "validity"


class ResolutionError(HydroNLSError, ValueError):
    code = "resolution"


class ContainmentError(HydroNLSError, ValueError):
    code = "containment"


class ConfigError(HydroNLSError, ValueError):
    code = "config"
