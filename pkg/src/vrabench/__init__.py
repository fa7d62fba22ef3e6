"""Benchmark toolkit for visual realism assessment of face-swap videos."""

__version__ = "0.1.0"
