"""Conditioning mechanisms for neural fields, compared at desk scale."""

__version__ = "0.1.0"
