"""Weighted integral representations, residue currents and division in C^n."""

__version__ = "0.1.0"
