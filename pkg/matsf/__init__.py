"""adversarially regularized multi-variable time-series forecasting"""
from . import _abstract
from .baselines import BaselineKind, MultiOutputTrainer, ParallelTrainer, train_multi_output, train_parallel_single
from .trainer import AdversarialTrainer, TrainConfig, TrainReport, train

__version__ = '0.1.0'
