"""Literate-programming toolchain for ILP Markdown documents."""

__version__ = "0.1.0"
