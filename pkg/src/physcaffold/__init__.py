"""Slime-mold-inspired transport-network scaffold generation for 3D printing."""

__version__ = "0.1.0"
