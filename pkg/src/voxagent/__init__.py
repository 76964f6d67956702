"""Hierarchical embodied-task engine on a semantic voxel map."""

__version__ = "0.1.0"
