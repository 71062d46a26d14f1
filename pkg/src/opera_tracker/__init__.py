"""Real-time opera score following: online time warping gated by audio event detectors."""

__version__ = "0.1.0"
