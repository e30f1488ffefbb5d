"""Fundamental measure theory for hard convex particles."""
__version__ = "0.1.0"
