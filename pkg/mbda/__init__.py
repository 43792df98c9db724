"""Multivariate big-data analysis of heterogeneous log streams."""

__version__ = "0.1.0"
