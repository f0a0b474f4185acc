"""Grounded textbook-index question answering and lecture-transcript analysis."""

__version__ = "0.1.0"
