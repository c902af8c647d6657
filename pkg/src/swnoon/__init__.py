"""Heralded spin-wave NOON states: truncated Fock-space simulation, fringe acquisition and fits."""

from .config import ConfigError, ExperimentConfig
from .detection import DetectorModel, FringeDataset, acquire_fringe
from .dynamics import MotionParams, delta_k, evolve, period_from_velocity
from .fitting import FitResult, FringeSeries, fit_dataset, fit_first_order, fit_second_order
from .fock import FockVector, ModeLayout
from .herald import WriteParams, herald, write_state
from .optics import DetectionNetwork, noon_network, stokes_analyzer

__version__ = "0.1.0"
