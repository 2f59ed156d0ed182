"""Survival-analysis benchmark toolkit for environmental mixture studies."""

__version__ = "0.1.0"
