"""Promptable iterative 3D segmentation at desk scale."""

from .grids import BinaryMask, LogitMap, Volume, read_grid, write_grid

__version__ = "0.1.0"

__all__ = ["BinaryMask", "LogitMap", "Volume", "read_grid", "write_grid", "__version__"]
