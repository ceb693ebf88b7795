"""Uncertainty-aware regression networks trained by interleaved reweighted least squares."""
__version__ = "0.1.0"
