"""Tight Hamiltonian paths and cycles in near-extremal 4-graphs."""

__version__ = "0.1.0"
