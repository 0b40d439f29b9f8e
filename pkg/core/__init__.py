"""Quantum objects, randomness and noise models."""
