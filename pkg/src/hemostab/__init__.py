"""Stability analysis and simulation of a maturity-structured cell population model."""
from .model import ModelConfig, ModelError, ValidatedModel, validate

__all__ = ["ModelConfig", "ModelError", "ValidatedModel", "validate"]
__version__ = "0.1.0"
