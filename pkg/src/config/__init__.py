"""
Configuration management for mdpreg
"""
