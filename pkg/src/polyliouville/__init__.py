"""Concentrating solutions of polyharmonic Liouville equations with Dirichlet or Navier data."""

from .core import Constants, constants_for
from .errors import LiouvilleError

__all__ = ["Constants", "LiouvilleError", "constants_for"]
__version__ = "0.1.0"
