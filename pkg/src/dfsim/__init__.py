"""Packet-level dragonfly interconnect simulator."""

__version__ = "0.1.0"
