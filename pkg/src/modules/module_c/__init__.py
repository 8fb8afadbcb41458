"""
Module C - Penalized Trainer
Feed-forward predictors trained with a conditional dependence penalty
"""
from .agent import ModuleC

__all__ = ["ModuleC"]
