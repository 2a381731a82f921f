"""Rough-path Euler schemes driven by fractional Brownian motion and numerical
checks of invariance, viability and comparison on convex sets."""

__version__ = "0.1.0"
