"""Modeling toolkit for NV-center relaxometry of magnon baths in thin films."""

__version__ = "0.1.0"
