"""Fourier-analytic lower bounds for the dimension of measures with structured spectra."""

__version__ = "0.1.0"
