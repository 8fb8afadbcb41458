"""
Module D - Causal Pathway Analyzer
Exact counterfactual pathway effects on discrete SCMs and Monte Carlo sensitivity of trained predictors
"""
from .agent import ModuleD

__all__ = ["ModuleD"]
