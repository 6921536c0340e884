"""Flow telemetry simulator and streaming-video flow classifier."""

__version__ = "0.1.0"
