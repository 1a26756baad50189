"""Contractive projections on finite-dimensional l_p(l_q) sequence spaces."""

__version__ = "0.1.0"
