"""Hanf normal form compiler for first-order logic over bounded-degree structures."""

__version__ = "0.1.0"
