"""
Module B - Dataset Generator

Seeded structural causal model families (blob, dsprites, yaleb_like,
fairface_like, waterbirds_discrete) with unit-level counterfactuals.
"""
from .agent import ModuleB

__all__ = ["ModuleB"]
