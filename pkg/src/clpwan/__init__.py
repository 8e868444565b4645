"""Hybrid LPWAN technology selection: radio models, traffic generation, a k-NN cognitive engine and a simulator."""

__version__ = "0.1.0"
