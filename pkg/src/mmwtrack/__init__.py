"""Millimeter-wave channel acquisition, tracking and abrupt change detection."""

__version__ = "0.1.0"
