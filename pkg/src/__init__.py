"""
mdpreg - matrix-variate Dirichlet process mixture regression with batch and
one-pass variational fitting
"""

__version__ = "0.1.0"
__author__ = "mdpreg developers"
