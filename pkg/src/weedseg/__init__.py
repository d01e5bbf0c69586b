"""Crop/weed dense classification from multispectral (NIR, Red) imagery."""

from ._backend import NAME as BACKEND

__version__ = "0.1.0"
