"""
Tests package for rankguard.
"""
