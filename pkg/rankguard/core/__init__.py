"""
Core package: finite-domain risks, divergences and rank analysis.
"""
