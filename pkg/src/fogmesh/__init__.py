"""Federated fog-cloud placement control engine and simulated fabric."""

__version__ = "0.1.0"
