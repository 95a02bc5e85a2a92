"""
Regression-type adjustment of neighbouring responses
"""
