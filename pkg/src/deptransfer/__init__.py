"""Dependency parsing with cross-lingual transfer for low-resource treebanks."""

__version__ = "0.1.0"
