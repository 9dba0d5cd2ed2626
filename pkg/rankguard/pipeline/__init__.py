"""
Pipeline package for data generation and file I/O.
"""
