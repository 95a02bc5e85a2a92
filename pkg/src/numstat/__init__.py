"""
Special functions, log densities and samplers for matrix-variate distributions
"""
