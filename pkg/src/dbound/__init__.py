"""Simulation and analysis toolkit for RFID distance-bounding protocols."""

__version__ = "0.1.0"
