"""Self-supervised hotspot detection and isolation for thermal images."""

__version__ = "0.1.0"
