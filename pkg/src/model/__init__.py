"""
Hyperparameters, variational state and state persistence
"""
