"""Spread-spectrum chat link simulator.

A software model of a two-node wireless chat system: characters travel as
dual-tone audio symbols, handshakes as pulse-interval codes, and both ride a
spread-spectrum FSK physical layer across a jammable multi-channel band.
"""

__version__ = "0.1.0"
