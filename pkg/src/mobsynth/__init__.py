"""Hierarchical agent pipeline for synthetic daily mobility generation."""

__version__ = "0.1.0"
