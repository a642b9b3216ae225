"""Simultaneous enhancement and super-resolution (SESR) toolkit."""

__version__ = "0.1.0"
