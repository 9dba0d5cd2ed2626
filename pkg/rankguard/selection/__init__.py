"""
Selection package: evaluation traces, the ES/RSS/HPS selectors and summary reports.
"""
