"""Ergodic coverage planning with measure-preserving flows on 2D meshes."""

__version__ = "0.1.0"
