"""
rankguard - Model selection with synthetic surrogate data.

Exact risk and divergence computation on finite domains, brute-force
verification of the rank-preservation bound, sample-based divergence
estimation, rank-correlation analysis and the ES/RSS/HPS selection
protocols over evaluation traces.
"""

__version__ = "0.1.0"
