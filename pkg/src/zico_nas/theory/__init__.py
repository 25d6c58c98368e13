"""Numerical checks of the convergence and generalization bounds."""
