"""Noise-sensitivity functionals for random walks on finitely generated groups."""

__version__ = "0.1.0"
