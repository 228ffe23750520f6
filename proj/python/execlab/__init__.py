"""Optimal execution toolkit: closed-form benchmark, neural controllers,
closed-form projections and market impact estimation."""

from ._execlab import *  # noqa: F401,F403
from ._execlab import __doc__  # noqa: F401

__version__ = "0.1.0"
