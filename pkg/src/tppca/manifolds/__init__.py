"""Concrete geometries."""

from .euclidean import Euclidean
from .landmarks import LandmarkManifold, shoot
from .sphere import Sphere

__all__ = ["Euclidean", "LandmarkManifold", "Sphere", "shoot"]
