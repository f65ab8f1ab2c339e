"""Tabular lab for learning initiation sets of black-box source policies."""

__version__ = "0.1.0"
