"""
Helper module for scripts.
"""

# Make scripts directory a package
