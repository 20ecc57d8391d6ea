"""Hierarchical goal-conditioned skill learning for planar robots."""

__version__ = "0.1.0"
