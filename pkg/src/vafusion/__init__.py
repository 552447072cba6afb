"""Verbal-autopsy cause-of-death classification from fused binary and narrative features."""

__version__ = "0.1.0"
