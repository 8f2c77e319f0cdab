"""Blow-up, feedback stabilization and null control for the mass-critical NLS
on rectangles, with a DST-I spectral discretization."""
from ._accel import backend_name
from .spectral import ComplexField, Grid, RectDomain, build_grid

__version__ = "0.1.0"

__all__ = ["ComplexField", "Grid", "RectDomain", "build_grid", "backend_name", "__version__"]
