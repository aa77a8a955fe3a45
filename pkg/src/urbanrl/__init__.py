"""Surrogate building-energy environment and reinforcement-learning HVAC controllers."""

__version__ = "0.1.0"
