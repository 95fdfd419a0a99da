"""centerdet: centerpoint object detection for overhead imagery at desk scale."""

__version__ = "0.1.0"
