"""
CLI package: the `rankguard` command.
"""
