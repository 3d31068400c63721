"""Real-time variable-rate source coding with finite-state decoders."""

__version__ = "0.1.0"
