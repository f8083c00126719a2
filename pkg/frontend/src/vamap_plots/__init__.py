"""Offline figure generation for the facade-mapping pipeline CSVs."""

__version__ = "0.1.0"
