"""Detect-then-classify violence recognition with lightweight, prunable blocks."""
__version__ = "0.1.0"
