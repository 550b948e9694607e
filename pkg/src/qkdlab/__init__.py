"""Simulator for BB84 over relay chains, drop-out secret sharing and a GHZ-type scheme."""

__version__ = "0.1.0"
