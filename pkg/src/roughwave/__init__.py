"""Stochastic wave equation with spatially rough noise: solvers, skeletons and rare-event estimates."""
__version__ = "0.1.0"
