"""Wedge and cone boundary layers via the Crocco transformation."""
__version__ = "0.1.0"
