"""Benchmark engine for faithfulness metrics of local feature attributions."""
__version__ = "0.1.0"
