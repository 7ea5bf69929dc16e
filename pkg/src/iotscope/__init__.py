"""IoT device category classification and action detection from network traffic."""

__version__ = "0.1.0"
