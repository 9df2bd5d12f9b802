"""CRAB: class-representation attentive text classification on a small from-scratch stack."""

from crab.head import CrabConfig, CrabParams
from crab.model import CrabModel
from crab.train import TrainConfig, evaluate, fit

__all__ = ["CrabConfig", "CrabParams", "CrabModel", "TrainConfig", "evaluate", "fit"]
__version__ = "0.1.0"
