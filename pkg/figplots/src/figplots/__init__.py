"""Offline rendering of the box simulator's figure-data files."""

from .datasets import COLUMNS, FigureDataset, SchemaError, load_dataset
from .render import render

__all__ = ["COLUMNS", "FigureDataset", "SchemaError", "load_dataset", "render"]
