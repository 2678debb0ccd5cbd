"""Two-stage wildfire forecasting under partial observability: reconstruct, then forecast."""

__version__ = "0.1.0"
