"""Voxel-based soft robots driven by shared, communication-less local self-attention controllers."""

__version__ = "0.1.0"
