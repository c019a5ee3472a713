"""Behavioral simulator for an STT-assisted SOT-MTJ ternary CAM."""
__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
