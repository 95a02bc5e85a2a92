"""
Command-line surface, data ingestion and metrics
"""
