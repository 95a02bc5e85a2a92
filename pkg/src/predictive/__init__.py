"""
Posterior predictive mixtures of multivariate t densities
"""
