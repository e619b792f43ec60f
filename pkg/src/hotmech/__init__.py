"""Heralded spin entanglement through a hot mechanical resonator."""

__version__ = "0.1.0"
