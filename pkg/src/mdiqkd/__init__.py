"""Measurement-device-independent QKD simulator with decoy-state post-processing."""

__version__ = "0.1.0"
