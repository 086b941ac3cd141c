"""Doppler-focusing recovery for sub-Nyquist pulse-Doppler radar."""

__version__ = "0.1.0"
