"""Unified single-tone/multi-tone SWIPT link simulator."""

__version__ = "0.1.0"
