"""Exact finite-precision calculus over the p-adic numbers."""

__version__ = "0.1.0"
