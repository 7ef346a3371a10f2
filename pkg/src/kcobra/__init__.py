"""Kernel-weighted consensual aggregation of regression machines."""

__version__ = "0.1.0"
