"""Thermal imaging toolkit: calibration, correction, evaluation and benchmarking."""

from ._thermopipe import *  # noqa: F401,F403
from ._thermopipe import __version__  # noqa: F401
