"""Process bridge exposing sentence encoders over line-delimited JSON."""

__version__ = "0.1.0"
