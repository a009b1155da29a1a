"""Polyglot phone-level language models with typology conditioning."""

__version__ = "0.1.0"
