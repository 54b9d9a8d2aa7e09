"""Projector-camera channel simulation, calibration, and illumination attacks."""

__version__ = "0.1.0"
