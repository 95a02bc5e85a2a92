"""
Batch mean-field variational Bayes for the MDP mixture regression
"""
