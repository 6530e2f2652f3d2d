"""Exact and Monte Carlo laboratory for the trapped mean-field free Bose gas in its loop-soup form."""

__version__ = "0.1.0"
