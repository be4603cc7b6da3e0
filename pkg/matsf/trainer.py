"""two-phase adversarial training of d single-variable forecasters

Each mini-batch first takes one MSE step per forecaster (forecast phase),
then trains the discriminator to tell observed target vectors from the
concatenated forecasts and pushes every forecaster towards vectors the
discriminator accepts (regularization phase).
"""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from . import tensor_core as tc
from ._abstract import AbstractTrainer, TrainConfig, TrainReport, check_loss, predict_models
from .data import WindowedDataset
from .evaluation import discriminator_accuracy
from .models import DiscriminatorModel, ForecasterModel
from .tensor_core import TensorNode
from .utils.config import Config
from .utils.exceptions import ConfigError, ContractError

logger = logging.getLogger(__name__)

LOG_EPS = 1e-12
NON_SATURATING = 'non_saturating'
SATURATING = 'saturating'

__all__ = ['TrainConfig', 'TrainReport', 'AdversarialTrainer', 'train',
    'forecast_phase_step', 'regularization_phase_step',
    'generator_adversarial_loss', 'discriminator_loss', 'discriminator_accuracy',
    'mse_loss']


def mse_loss(pred: TensorNode, target: np.ndarray) -> TensorNode:
    """sum of squared errors over the batch divided by the batch size; for a
    [n x d] prediction this is the sum of the d per-column MSEs"""
    diff = tc.sub(pred, tc.constant(target))
    return tc.scale(tc.sum(tc.mul(diff, diff)), 1.0 / pred.shape[0])


def _safe_log(x: TensorNode) -> TensorNode:
    return tc.log(tc.clip(x, LOG_EPS, 1.0))


def discriminator_loss(disc: DiscriminatorModel,
    real: Union[np.ndarray, TensorNode],
    fake: Union[np.ndarray, TensorNode]) -> Tuple[TensorNode, float]:
    """-[mean log D(real) + mean log(1 - D(fake))] and the accuracy of the
    same scores"""
    d_real = disc.forward(real)
    d_fake = disc.forward(fake)
    loss = tc.neg(tc.add(tc.mean(_safe_log(d_real)),
        tc.mean(_safe_log(tc.shift(tc.neg(d_fake), 1.0)))))
    return loss, discriminator_accuracy(d_real.values, d_fake.values)


def generator_adversarial_loss(disc: DiscriminatorModel,
    forecast_concat: TensorNode, form: str=NON_SATURATING) -> TensorNode:
    """-mean log D(z) (non_saturating) or mean log(1 - D(z)) (saturating)"""
    scores = disc.forward(forecast_concat)
    if form == NON_SATURATING:
        return tc.neg(tc.mean(_safe_log(scores)))
    elif form == SATURATING:
        return tc.mean(_safe_log(tc.shift(tc.neg(scores), 1.0)))
    raise ConfigError(f"unknown generator loss {form!r}")


def forecast_phase_step(models: Sequence[ForecasterModel],
    batch: Tuple[np.ndarray, np.ndarray],
    opts: Union[tc.OptimizerState, Sequence[tc.OptimizerState]],
    epoch: Optional[int]=None, batch_index: Optional[int]=None,
    threshold: float=TrainConfig.DEFAULTS['divergence_threshold']) -> np.ndarray:
    """one MSE step for each model on its own target column

    :param opts: one optimizer state per model; a single state is only
        accepted for a single model
    :return: pre-update loss of every model
    """
    windows, targets = batch
    AbstractTrainer.check_targets(targets, len(models))
    if isinstance(opts, tc.OptimizerState):
        if len(models) != 1:
            raise ContractError("each forecaster needs its own optimizer state")
        opts = [opts]
    losses = np.zeros(len(models))
    for i, (model, opt) in enumerate(zip(models, opts)):
        loss = mse_loss(model.forward(windows), targets[:, i:i + 1])
        losses[i] = check_loss(loss.item(), f'forecast loss of variable {i}',
            threshold, epoch, batch_index)
        tc.backward(loss)
        tc.optimizer_step(opt, model.parameters())
    return losses


def regularization_phase_step(models: Sequence[ForecasterModel],
    disc: DiscriminatorModel,
    batch: Tuple[np.ndarray, np.ndarray],
    disc_opt: tc.OptimizerState,
    gen_opts: Sequence[tc.OptimizerState],
    cfg: Optional[TrainConfig]=None,
    epoch: Optional[int]=None, batch_index: Optional[int]=None
    ) -> Tuple[float, float, float]:
    """discriminator steps on (targets, frozen forecasts), then generator steps
    on the forecasters through a frozen discriminator

    :return: mean pre-update disc_loss, disc_acc and gen_loss over the steps
    """
    cfg = cfg if cfg is not None else TrainConfig()
    windows, targets = batch
    AbstractTrainer.check_targets(targets, len(models))
    threshold = float(cfg.divergence_threshold)
    with tc.no_grad():
        fake = np.concatenate([m.forward(windows).values for m in models], axis=1)

    disc_losses, accs = [], []
    for _ in range(int(cfg.disc_steps_per_batch)):
        loss, acc = discriminator_loss(disc, targets, fake)
        disc_losses.append(check_loss(loss.item(), 'discriminator loss',
            threshold, epoch, batch_index))
        accs.append(acc)
        tc.backward(loss)
        tc.optimizer_step(disc_opt, disc.parameters())

    lam = float(cfg.lambda_adv)
    gen_losses = []
    for _ in range(int(cfg.gen_steps_per_batch)):
        if lam == 0:
            # no update at all; Adam would still move parameters on a zero gradient
            with tc.no_grad():
                z = tc.concat([m.forward(windows) for m in models], axis=1)
                gen_losses.append(generator_adversarial_loss(disc, z, cfg.generator_loss).item())
            continue
        with tc.frozen(disc.parameters()):
            z = tc.concat([m.forward(windows) for m in models], axis=1)
            loss = generator_adversarial_loss(disc, z, cfg.generator_loss)
            gen_losses.append(check_loss(loss.item(), 'generator loss',
                threshold, epoch, batch_index))
            tc.backward(tc.scale(loss, lam))
        for model, opt in zip(models, gen_opts):
            tc.optimizer_step(opt, model.parameters())
    return float(np.mean(disc_losses)), float(np.mean(accs)), float(np.mean(gen_losses))


class AdversarialTrainer(AbstractTrainer):
    """d forecasters and one discriminator; separate optimizer states for the
    forecast phase, the generator step and the discriminator"""
    system = 'adversarial'

    def __init__(self, models: Sequence[ForecasterModel], disc: DiscriminatorModel,
        config: Union[str, Path, Config, dict, None]=None):
        super(AdversarialTrainer, self).__init__(config)
        if not models:
            raise ConfigError("the adversarial system needs at least one forecaster")
        for k, m in enumerate(models):
            if m.out != 1:
                raise ConfigError(f"forecaster {k} has out={m.out}; each must forecast one variable")
        if disc.input_size != len(models):
            raise ConfigError(f"discriminator scores {disc.input_size}-vectors, "
                f"got {len(models)} forecasters")
        self.models = list(models)
        self.disc = disc
        cfg = self.config
        self.forecast_opts = [cfg.make_optimizer(cfg.lr_forecast) for _ in self.models]
        self.gen_opts = [cfg.make_optimizer(cfg.lr_gen) for _ in self.models]
        self.disc_opt = cfg.make_optimizer(cfg.lr_disc)

    @property
    def discriminator(self) -> DiscriminatorModel:
        return self.disc

    def parameters(self) -> List[TensorNode]:
        return [p for m in self.models for p in m.parameters()] + self.disc.parameters()

    def _train_batch(self, windows: np.ndarray, targets: np.ndarray,
        epoch: int, batch: int) -> Dict[str, Any]:
        threshold = float(self.config.divergence_threshold)
        losses = forecast_phase_step(self.models, (windows, targets), self.forecast_opts,
            epoch, batch, threshold)
        disc_loss, disc_acc, gen_loss = regularization_phase_step(self.models, self.disc,
            (windows, targets), self.disc_opt, self.gen_opts, self.config, epoch, batch)
        logger.debug(f"epoch {epoch} batch {batch}: forecast {losses.tolist()} "
            f"disc {disc_loss:.6g} acc {disc_acc:.3f} gen {gen_loss:.6g}")
        return dict(forecast_loss=losses, disc_loss=disc_loss, disc_acc=disc_acc,
            gen_loss=gen_loss)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return predict_models(self.models, windows, int(self.config.max_workers))


def train(models: Sequence[ForecasterModel], disc: DiscriminatorModel,
    dataset: WindowedDataset, cfg: Union[TrainConfig, Config, dict, None]=None,
    test: Optional[WindowedDataset]=None) -> TrainReport:
    """fit the adversarial system; with a test split the report carries test MSE"""
    return AdversarialTrainer(models, disc, cfg).fit(dataset, test)
