"""Vessel trajectory curation, probabilistic route features, and forecasting."""

__version__ = "0.1.0"
