"""
Recursive variational lower bound diagnostics
"""
