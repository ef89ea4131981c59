"""Inexact matrix Newton solvers for eigenvector-dependent eigenproblems."""

__version__ = "0.1.0"
