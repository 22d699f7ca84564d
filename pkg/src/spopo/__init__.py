"""Multimode squeezed frequency-comb simulation and entanglement analysis."""

__version__ = "0.1.0"
