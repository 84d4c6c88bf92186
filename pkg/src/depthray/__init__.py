"""Depth-ray geometry toolkit: camera recovery, robust alignment, losses, fusion and benchmark metrics."""

__version__ = "0.1.0"
