"""Numerical toolkit for 3D contact sub-Riemannian geometry."""

__version__ = "0.1.0"
