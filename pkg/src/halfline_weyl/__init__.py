"""Weyl solutions, discrete spectra and resolvents of -y'' + q y on [0, inf)."""

__version__ = "0.1.0"
