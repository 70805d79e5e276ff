"""Spectral laboratory for high-contrast random media with spherical inclusions."""

__version__ = "0.1.0"
