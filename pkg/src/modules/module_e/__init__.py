"""
Module E - Scaling Benchmark
Naive full-reference conditional distance correlation versus single-shot sDISCO
"""
from .agent import ModuleE

__all__ = ["ModuleE"]
