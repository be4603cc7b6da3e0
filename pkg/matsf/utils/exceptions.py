"""exception hierarchy shared by every matsf module"""
from __future__ import annotations
from typing import Any, Optional


class MatsfError(Exception):
    """base class of all errors raised by matsf"""


class DimensionError(MatsfError, ValueError):
    """tensor extents disagree"""


class DomainError(MatsfError, ValueError):
    """input outside the mathematical domain of an op (e.g. log of x <= 0)"""


class ContractError(MatsfError):
    """a documented precondition of an operation was violated"""


class ConfigError(MatsfError):
    """invalid or inconsistent configuration"""


class SchemaError(MatsfError):
    """input file does not match the declared column schema"""


class InputError(MatsfError):
    """input data is empty, too short, or otherwise unusable"""


class EncodingError(MatsfError):
    """a categorical value is outside the recorded vocabulary"""


class DivergenceError(MatsfError):
    """a training loss became non-finite or exceeded the divergence threshold

    :param epoch: epoch index at which training diverged
    :param batch: batch index inside the epoch
    :param report: the partial TrainReport collected so far (set by the trainer)
    """
    def __init__(self, message: str, 
        epoch: Optional[int]=None, 
        batch: Optional[int]=None,
        report: Any=None):
        super(DivergenceError, self).__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.report = report
