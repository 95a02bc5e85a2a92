"""
Test suite for mdpreg
"""
