"""Quantum-trajectory simulation of two-qubit entanglement generation by
continuous parity measurement and local feedback."""

__version__ = "0.1.0"
