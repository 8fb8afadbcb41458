"""
Module A: Dependence Analyzer
Distance covariance / correlation and conditional distance correlation estimators
"""
from .agent import ModuleA

__all__ = ["ModuleA"]
