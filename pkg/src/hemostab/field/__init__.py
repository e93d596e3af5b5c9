"""Numerical solution of the maturity-structured population field."""
from .history import FieldHistory, HistoryGap, MaturityGrid
from .solver import Field, PicardDiverged, solve_field

__all__ = ["Field", "FieldHistory", "HistoryGap", "MaturityGrid", "PicardDiverged", "solve_field"]
