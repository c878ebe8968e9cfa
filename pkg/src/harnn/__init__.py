"""Sequential item recommendation with heterogeneous user and item attributes."""

__version__ = "0.1.0"
