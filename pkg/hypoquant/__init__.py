"""HypoQuant - brain-iron hypointensity quantification."""

__version__ = "0.1.0"
