"""Forced alignment, acoustic measurement and phonetic typology toolkit."""
__version__ = "0.1.0"
