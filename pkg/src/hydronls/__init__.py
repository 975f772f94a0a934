"""Exact self-similar solutions of the critical focusing NLS via the
Madelung (hydrodynamic) picture, plus an independent split-step oracle."""

from hydronls.errors import (
    ConfigError,
    ContainmentError,
    GridError,
    HydroNLSError,
    ResolutionError,
    ShootingError,
    ValidityError,
)
from hydronls.fields import Grid, WaveField, make_grid, quadrature_integrate, spectral_derivatives

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContainmentError",
    "Grid",
    "GridError",
    "HydroNLSError",
    "ResolutionError",
    "ShootingError",
    "ValidityError",
    "WaveField",
    "make_grid",
    "quadrature_integrate",
    "spectral_derivatives",
]
