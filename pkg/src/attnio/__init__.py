"""Polynomial approximate attention and an I/O-counting two-level memory simulator."""

__version__ = "0.1.0"
