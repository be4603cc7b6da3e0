from __future__ import annotations
import json
import logging
import math
import os
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Union
import numpy as np
import pandas as pd
from tqdm import tqdm
from . import tensor_core as tc
from .data import WindowedDataset
from .evaluation import mse_per_variable
from .utils.config import Config
from .utils.exceptions import ConfigError, ContractError, DivergenceError
from .utils.utils import STREAM_SHUFFLE, iter_by_chunk, make_rng

LOGPATH = Path(os.environ.get('MATSF_LOGDIR', './.log/'))
LOGFILE = LOGPATH.joinpath('log.log')

if not LOGPATH.exists():
    LOGPATH.mkdir(parents=True, exist_ok=True)

logging.basicConfig(filename=LOGFILE,
    # encoding='utf-8',
    level=logging.DEBUG)

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 2048


class TrainConfig(Config):
    """hyper-parameters of one training run; unknown keys are kept so a config
    echo re-runs verbatim"""
    DEFAULTS = dict(
        epochs=30,
        batch_size=64,
        lr_forecast=1e-3,
        lr_disc=1e-3,
        lr_gen=1e-4,
        optimizer='adam',
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_epsilon=1e-8,
        disc_steps_per_batch=1,
        gen_steps_per_batch=1,
        lambda_adv=0.1,
        generator_loss='non_saturating',
        divergence_threshold=1e6,
        seed=0,
        max_workers=1,
        verbose=False,
        )
    FIELDS = tuple(DEFAULTS)

    def __init__(self, d: Optional[Dict]=None, **kwargs):
        merged = dict(self.DEFAULTS)
        merged.update({k: v for k, v in dict(d or {}, **kwargs).items() if v is not None})
        super(TrainConfig, self).__init__(merged)

    def validate(self) -> 'TrainConfig':
        for name in ('batch_size', 'disc_steps_per_batch', 'gen_steps_per_batch', 'max_workers'):
            if self._typed(name, 'int') < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self._typed('epochs', 'int') < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        for name in ('lr_forecast', 'lr_disc', 'lr_gen', 'divergence_threshold'):
            if not self._typed(name, 'float') > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self._typed('lambda_adv', 'float') >= 0:
            raise ConfigError(f"lambda_adv must be >= 0, got {self.lambda_adv}")
        if self._typed('optimizer', 'str').lower() not in ('sgd', 'adam'):
            raise ConfigError(f"optimizer takes 'sgd' or 'adam', got {self.optimizer!r}")
        if self.generator_loss not in ('non_saturating', 'saturating'):
            raise ConfigError(f"generator_loss takes 'non_saturating' or 'saturating', "
                f"got {self.generator_loss!r}")
        return self

    def _typed(self, name: str, returntype: str):
        """self.get with the default filled in; a value that won't coerce is a
        ConfigError"""
        try:
            return self.get(name, returntype, self.DEFAULTS[name])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name} must be {returntype}, got {getattr(self, name)!r}") from e

    def make_optimizer(self, learning_rate: float) -> tc.OptimizerState:
        return tc.OptimizerState(self.optimizer, learning_rate,
            self.adam_beta1, self.adam_beta2, self.adam_epsilon)


class TrainReport:
    """per-epoch curves, final test metrics and the config echo of a run"""

    def __init__(self, system: str, variables: Sequence[str], config: Dict[str, Any]):
        self.system = system
        self.variables = list(variables)
        self.config = dict(config)
        self.epochs: List[Dict[str, Any]] = []
        self.initial_test_mse: Optional[List[float]] = None
        self.test_mse: Optional[List[float]] = None
        self.test_mse_scaled: Optional[List[float]] = None
        self.status = 'completed'
        self.error: Optional[str] = None
        self.wall_clock_seconds: float = 0.0

    def forecast_loss_curve(self, variable: Union[int, str]) -> List[float]:
        name = self.variables[variable] if isinstance(variable, int) else variable
        return [e['forecast_loss'][name] for e in self.epochs]

    def metric_curve(self, name: str) -> List[Optional[float]]:
        return [e.get(name) for e in self.epochs]

    def summary(self) -> Dict[str, Any]:
        """everything except wall clock, so reruns compare byte-for-byte"""
        final = self.epochs[-1] if self.epochs else {}
        return dict(system=self.system, variables=self.variables,
            status=self.status, error=self.error,
            epochs_completed=len(self.epochs),
            final_forecast_loss=final.get('forecast_loss'),
            final_disc_loss=final.get('disc_loss'),
            final_disc_acc=final.get('disc_acc'),
            final_gen_loss=final.get('gen_loss'),
            initial_test_mse=self.initial_test_mse,
            test_mse=self.test_mse,
            test_mse_scaled=self.test_mse_scaled,
            config=self.config)

    def loss_frame(self) -> pd.DataFrame:
        """one row per epoch: forecast loss per variable and the adversarial curves"""
        rows = []
        for e in self.epochs:
            row = dict(epoch=e['epoch'])
            row.update({f'forecast_loss_{v}': e['forecast_loss'][v] for v in self.variables})
            row.update(disc_loss=e.get('disc_loss'), disc_acc=e.get('disc_acc'),
                gen_loss=e.get('gen_loss'))
            rows.append(row)
        columns = ['epoch'] + [f'forecast_loss_{v}' for v in self.variables] \
            + ['disc_loss', 'disc_acc', 'gen_loss']
        return pd.DataFrame(rows, columns=columns)

    def write(self, out_dir: Union[str, Path]) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        out.joinpath('report.jsonl').write_text(
            ''.join(json.dumps(e, sort_keys=True) + '\n' for e in self.epochs))
        out.joinpath('summary.json').write_text(
            json.dumps(self.summary(), sort_keys=True, indent=2))
        out.joinpath('timing.json').write_text(
            json.dumps(dict(wall_clock_seconds=self.wall_clock_seconds), indent=2))
        return out

    @classmethod
    def read(cls, out_dir: Union[str, Path]) -> 'TrainReport':
        out = Path(out_dir)
        summary = json.loads(out.joinpath('summary.json').read_text())
        report = cls(summary['system'], summary['variables'], summary['config'])
        lines = out.joinpath('report.jsonl').read_text().splitlines()
        report.epochs = [json.loads(l) for l in lines if l.strip()]
        report.status, report.error = summary['status'], summary['error']
        report.initial_test_mse = summary['initial_test_mse']
        report.test_mse = summary['test_mse']
        report.test_mse_scaled = summary['test_mse_scaled']
        return report


def check_loss(value: float, what: str, threshold: float,
    epoch: Optional[int]=None, batch: Optional[int]=None) -> float:
    """divergence guard: non-finite or above threshold aborts training"""
    if not math.isfinite(value) or abs(value) > threshold:
        msg = f"{what} diverged ({value!r}) at epoch {epoch}, batch {batch}"
        logger.error(msg)
        raise DivergenceError(msg, epoch=epoch, batch=batch)
    return value


def predict_models(models: Sequence[Any], windows: np.ndarray,
    max_workers: int=1, chunk: int=PREDICT_CHUNK) -> np.ndarray:
    """[N x lookback x F] -> [N x sum(out)], one task per model, no graph"""
    def run(model):
        with tc.no_grad():
            parts = [model.forward(windows[list(rows)]).values
                for rows in iter_by_chunk(range(len(windows)), chunk)]
        return np.concatenate(parts, axis=0) if parts else np.zeros((0, model.out))
    if max_workers > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(run, m) for m in models]
            columns = [future.result() for future in futures]
    else:
        columns = [run(m) for m in models]
    return np.concatenate(columns, axis=1)


class AbstractTrainer(ABC):
    """shared mini-batch loop; subclasses supply one batch update and prediction"""
    system = 'abstract'

    def _get_config(self, config: Union[str, Path, Config, dict, None]) -> TrainConfig:
        if isinstance(config, Path):
            config = config.as_posix()
        if config is None:
            config = TrainConfig()
        elif isinstance(config, str):
            config = TrainConfig.from_json(config)
        elif isinstance(config, TrainConfig):
            pass
        elif isinstance(config, Config):
            config = TrainConfig(config.to_dict())
        elif isinstance(config, dict):
            config = TrainConfig(config)
        else:
            raise NotImplementedError
        assert isinstance(config, TrainConfig)
        return config.validate()

    def __init__(self, config: Union[str, Path, Config, dict, None]=None):
        self.config = self._get_config(config)

    @abstractmethod
    def _train_batch(self, windows: np.ndarray, targets: np.ndarray,
        epoch: int, batch: int) -> Dict[str, Any]:
        """one update; returns forecast_loss (d-vector) and, for the
        adversarial system, disc_loss / disc_acc / gen_loss"""
        raise NotImplementedError

    @abstractmethod
    def predict(self, windows: np.ndarray) -> np.ndarray:
        """scaled [N x d] forecasts"""
        raise NotImplementedError

    @abstractmethod
    def parameters(self) -> List[tc.TensorNode]:
        raise NotImplementedError

    @property
    def discriminator(self):
        return None

    def _batches(self, n: int, epoch: int) -> Iterator[np.ndarray]:
        order = make_rng(self.config.seed, STREAM_SHUFFLE, epoch).permutation(n)
        for chunk in iter_by_chunk(order, int(self.config.batch_size)):
            yield np.asarray(chunk, dtype=int)

    def _guard(self, value: float, what: str, epoch: int, batch: int) -> float:
        return check_loss(value, what, float(self.config.divergence_threshold), epoch, batch)

    def _epoch_record(self, epoch: int, variables: Sequence[str],
        records: List[Dict[str, Any]]) -> Dict[str, Any]:
        losses = np.mean([r['forecast_loss'] for r in records], axis=0)
        rec = dict(epoch=epoch, batches=len(records),
            forecast_loss={v: float(l) for v, l in zip(variables, losses)})
        for key in ('disc_loss', 'disc_acc', 'gen_loss'):
            values = [r[key] for r in records if r.get(key) is not None]
            rec[key] = float(np.mean(values)) if values else None
        return rec

    def _test_mse(self, test: WindowedDataset, scaled: bool=False) -> List[float]:
        pred = self.predict(test.windows)
        if scaled or test.scaler is None:
            return mse_per_variable(pred, test.targets).tolist()
        return mse_per_variable(pred, test.targets, test.scaler, test.target_columns).tolist()

    def fit(self, train: WindowedDataset,
        test: Optional[WindowedDataset]=None) -> TrainReport:
        """epochs of seed-shuffled mini-batches; DivergenceError carries the
        partial report"""
        if len(train) == 0:
            raise ConfigError("training dataset is empty")
        cfg = self.config
        report = TrainReport(self.system, train.target_columns, cfg.to_dict())
        if test is not None and len(test):
            report.initial_test_mse = self._test_mse(test)
        start = time.perf_counter()
        try:
            for epoch in tqdm(range(int(cfg.epochs)), desc=self.system,
                disable=not cfg.verbose):
                records = [self._train_batch(train.windows[idx], train.targets[idx], epoch, b)
                    for b, idx in enumerate(self._batches(len(train), epoch))]
                rec = self._epoch_record(epoch, train.target_columns, records)
                report.epochs.append(rec)
                logger.info(f"[{self.system}] epoch {epoch}: forecast {rec['forecast_loss']} "
                    f"disc_loss {rec['disc_loss']} disc_acc {rec['disc_acc']} gen {rec['gen_loss']}")
        except DivergenceError as e:
            report.status, report.error = 'diverged', str(e)
            report.wall_clock_seconds = time.perf_counter() - start
            e.report = report
            raise
        report.wall_clock_seconds = time.perf_counter() - start
        if test is not None and len(test):
            report.test_mse = self._test_mse(test)
            report.test_mse_scaled = self._test_mse(test, scaled=True)
        return report

    @classmethod
    def check_targets(cls, targets: np.ndarray, d: int):
        if targets.ndim != 2 or targets.shape[1] != d:
            raise ContractError(f"targets must be [batch x {d}], got {targets.shape}")
