"""Cavity Concentration - entanglement concentration of atomic pairs via cavity decay"""

__version__ = "1.0.0"
