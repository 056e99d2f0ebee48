"""Hierarchical binomial-logit hidden Markov model for home-run rates."""

from .basis import SplineBasis, eval_basis, make_basis, trajectory
from .data import Dataset, IngestConfig, PlayerSeason, build_dataset, load_seasons
from .model import Hyperparams, ModelState

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Hyperparams", "IngestConfig", "ModelState", "PlayerSeason", "SplineBasis",
    "build_dataset", "eval_basis", "load_seasons", "make_basis", "trajectory",
]
