"""Rashomon quartet: four regression models that tie on test performance but disagree on how the data work."""

__version__ = "0.1.0"
