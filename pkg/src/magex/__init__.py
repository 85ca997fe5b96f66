"""Hierarchical multi-agent navigation: a learned goal commander over a graph-based action executor."""

__version__ = "0.1.0"
