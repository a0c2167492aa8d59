"""Numerical toolkit for SRB measures on desk-scale hyperbolic attractors."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: F401
