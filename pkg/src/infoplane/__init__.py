"""Information-plane analysis of small dense networks."""

__version__ = "0.1.0"

from . import datagen, estimators, nets, objectives, runner  # noqa: F401
