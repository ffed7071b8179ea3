"""Unsupervised segmentation of overlapping cervical cells in multi-focal stacks."""

__version__ = "0.1.0"
