"""Variational regularization of manifold-valued signals and images."""

__version__ = "0.1.0"
