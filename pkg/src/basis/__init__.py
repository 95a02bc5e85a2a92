"""
Kernel basis design map and covariate standardization
"""
