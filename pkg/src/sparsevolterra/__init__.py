"""Sparse spectral solvers for Volterra integral and integro-differential
equations on [0, 1], built from banded Jacobi operators."""
