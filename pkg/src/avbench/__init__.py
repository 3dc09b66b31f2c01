"""Diagnostics and benchmarking harness for audio-video deepfake detection datasets."""

__version__ = "0.1.0"
