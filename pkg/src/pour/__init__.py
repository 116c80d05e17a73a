"""Projection-based class unlearning on synthetic neural-collapse geometry."""

__version__ = "0.1.0"
