"""Exact factorization of polynomial automorphisms into elementary words."""

__version__ = "0.1.0"
