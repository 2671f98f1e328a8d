"""Unsupervised 2D-to-3D human pose lifting with geometric self-supervision."""
from . import data, evaluate, geometry, models, training
from .errors import LiftGeoError

__version__ = "0.1.0"

__all__ = ["data", "evaluate", "geometry", "models", "training", "LiftGeoError", "__version__"]
