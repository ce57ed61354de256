"""Cryogenic microscope focal-shift modelling and edge-MTF metrology."""

__version__ = "0.1.0"
