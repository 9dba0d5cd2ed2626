"""
Utils package for logging, settings and the error hierarchy.
"""
