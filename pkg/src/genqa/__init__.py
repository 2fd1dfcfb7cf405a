"""Generative question answering over a triple knowledge-base."""

__version__ = "0.1.0"
