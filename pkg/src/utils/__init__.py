"""
Logging and error types shared across mdpreg
"""
