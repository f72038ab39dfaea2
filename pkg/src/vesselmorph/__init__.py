"""Synthesize time-parameterized vessel trees from two static phases."""

__version__ = "0.1.0"
