"""
Online one-pass variational fitting with greedy soft allocation
"""
