"""
Weak-informativity screening of priors through conflict p-values
"""
