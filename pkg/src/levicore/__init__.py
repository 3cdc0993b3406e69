"""Levi null distributions, Levi cores, D'Angelo forms and the Diederich-Fornaess index."""

__version__ = "0.1.0"
