"""LEAP: live classroom experiments over remotely callable instructor functions."""

__version__ = "0.1.0"
