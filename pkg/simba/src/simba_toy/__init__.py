"""Toy-scale multimodal detector: two encoders, late fusion, three heads."""

__version__ = "0.1.0"
