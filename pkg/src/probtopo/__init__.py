"""Persistent homology of probability surfaces built from trajectory samples,
with committor tests of the features on analytic model systems."""

__version__ = "0.1.0"
