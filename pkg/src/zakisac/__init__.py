"""Zak-OTFS semi-blind integrated sensing and communication."""

__version__ = "0.1.0"
