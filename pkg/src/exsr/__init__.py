"""Exemplar-guided face super-resolution and editing toolkit."""

__version__ = "0.1.0"
