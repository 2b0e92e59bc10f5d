"""Spectra, eigenstates and chaos diagnostics for a harmonic waveguide with
zero-range scatterers on its axis."""

__version__ = "0.1.2"
