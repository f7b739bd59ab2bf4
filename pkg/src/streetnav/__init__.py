"""Street-camera navigation pipeline with a deterministic intersection simulator."""

__version__ = "0.1.0"
