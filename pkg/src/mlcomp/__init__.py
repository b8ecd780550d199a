"""Decentralized stochastic multi-level compositional optimization."""

__version__ = "0.1.0"
