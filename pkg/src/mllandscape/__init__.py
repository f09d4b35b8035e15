"""Energy-landscape tools for machine-learning cost functions."""
__version__ = "0.1.0"
