"""Symplectic gyroceptrons: structure-preserving surrogates for nearly-periodic maps."""

__version__ = "0.1.0"

from .circle_actions import CircleAction
from .errors import (
    ConfigurationError,
    ContractError,
    DivergenceError,
    IntegrationError,
    NumericalError,
    RolloutError,
)
from .gyroceptron import SymplecticGyroceptron
from .potential_net import PotentialNet
from .symplectic_maps import HenonLayer, HenonNet, NearIdentityHenonNet
from .training import TrainConfig, TrainReport, train

__all__ = [
    "CircleAction",
    "ConfigurationError",
    "ContractError",
    "DivergenceError",
    "HenonLayer",
    "HenonNet",
    "IntegrationError",
    "NearIdentityHenonNet",
    "NumericalError",
    "PotentialNet",
    "RolloutError",
    "SymplecticGyroceptron",
    "TrainConfig",
    "TrainReport",
    "train",
]
