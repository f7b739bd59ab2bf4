"""Deterministic discrete-time intersection world and its camera."""
