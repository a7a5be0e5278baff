"""Adaptive coarse-to-fine tokenization of 3D chain structures."""

__version__ = "0.1.0"
