"""Desk-scale non-contact gaze mapping: synthetic shelf users through a full estimate-and-match pipeline."""

__version__ = "0.1.0"
