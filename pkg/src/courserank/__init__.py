"""Rank training courses by their employability effect on administrative career data."""

__version__ = "0.1.0"
