"""Adaptive thinking-mode selection for hybrid-reasoning LLMs."""

__version__ = "0.1.0"
