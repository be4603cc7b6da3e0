"""the two comparison systems, trained through the same loop as the
adversarial one"""
from __future__ import annotations
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import numpy as np
from . import tensor_core as tc
from ._abstract import AbstractTrainer, TrainConfig, TrainReport, predict_models
from .data import WindowedDataset
from .models import ForecasterModel
from .tensor_core import TensorNode
from .trainer import forecast_phase_step, mse_loss
from .utils.config import Config
from .utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    MULTI_OUTPUT = 'multi_output'
    PARALLEL_SINGLE_OUTPUT = 'parallel'


class MultiOutputTrainer(AbstractTrainer):
    """one network emitting all d variables, trained on the summed MSE"""
    system = BaselineKind.MULTI_OUTPUT.value

    def __init__(self, model: ForecasterModel,
        config: Union[str, Path, Config, dict, None]=None):
        super(MultiOutputTrainer, self).__init__(config)
        self.model = model
        self.models = [model]
        cfg = self.config
        self.opt = cfg.make_optimizer(cfg.lr_forecast)

    def parameters(self) -> List[TensorNode]:
        return self.model.parameters()

    def _train_batch(self, windows: np.ndarray, targets: np.ndarray,
        epoch: int, batch: int) -> Dict[str, Any]:
        self.check_targets(targets, self.model.out)
        pred = self.model.forward(windows)
        loss = mse_loss(pred, targets)
        self._guard(loss.item(), 'multi-output loss', epoch, batch)
        per_variable = np.sum((pred.values - targets) ** 2, axis=0) * (1.0 / len(targets))
        tc.backward(loss)
        tc.optimizer_step(self.opt, self.model.parameters())
        return dict(forecast_loss=per_variable)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return predict_models([self.model], windows)


class ParallelTrainer(AbstractTrainer):
    """d independent single-output forecasters, forecast phase only"""
    system = BaselineKind.PARALLEL_SINGLE_OUTPUT.value

    def __init__(self, models: Sequence[ForecasterModel],
        config: Union[str, Path, Config, dict, None]=None):
        super(ParallelTrainer, self).__init__(config)
        if not models:
            raise ConfigError("the parallel baseline needs at least one forecaster")
        for k, m in enumerate(models):
            if m.out != 1:
                raise ConfigError(f"forecaster {k} has out={m.out}; each must forecast one variable")
        self.models = list(models)
        cfg = self.config
        self.opts = [cfg.make_optimizer(cfg.lr_forecast) for _ in self.models]

    def parameters(self) -> List[TensorNode]:
        return [p for m in self.models for p in m.parameters()]

    def _train_batch(self, windows: np.ndarray, targets: np.ndarray,
        epoch: int, batch: int) -> Dict[str, Any]:
        losses = forecast_phase_step(self.models, (windows, targets), self.opts,
            epoch, batch, float(self.config.divergence_threshold))
        return dict(forecast_loss=losses)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return predict_models(self.models, windows, int(self.config.max_workers))


def train_multi_output(model: ForecasterModel, dataset: WindowedDataset,
    cfg: Union[TrainConfig, Config, dict, None]=None,
    test: Optional[WindowedDataset]=None) -> TrainReport:
    if model.out != dataset.n_variables:
        raise ConfigError(f"multi-output head emits {model.out} values for "
            f"{dataset.n_variables} target variables")
    return MultiOutputTrainer(model, cfg).fit(dataset, test)


def train_parallel_single(models: Sequence[ForecasterModel], dataset: WindowedDataset,
    cfg: Union[TrainConfig, Config, dict, None]=None,
    test: Optional[WindowedDataset]=None) -> TrainReport:
    if len(models) != dataset.n_variables:
        raise ConfigError(f"{len(models)} forecasters for {dataset.n_variables} target variables")
    return ParallelTrainer(models, cfg).fit(dataset, test)
