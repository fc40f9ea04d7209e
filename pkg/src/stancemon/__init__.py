"""Stance detection and media-monitoring pipeline for news corpora."""

__version__ = "0.1.0"
