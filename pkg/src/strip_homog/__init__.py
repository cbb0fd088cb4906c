"""Numerical verification of homogenization in a strip perforated along a curve."""

__version__ = "0.1.0"
