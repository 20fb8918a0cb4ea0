"""Seeded quantum cellular automata on a growing matrix-product-operator row."""

__version__ = "0.1.0"
