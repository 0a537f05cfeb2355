"""Beable jump trajectories, optimal fields and mechanism identification."""

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, EmptyResultError, NumericalError  # noqa: F401

__version__ = "0.1.0"
