"""Information-package dynamic network loading simulator."""

__version__ = "0.1.0"
