"""per-variable errors, joint-consistency and system comparison"""
from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd
from . import tensor_core as tc
from .data import MinMaxColumnScaler, WindowedDataset
from .utils.exceptions import ContractError, DimensionError

logger = logging.getLogger(__name__)

MIN_JOINT_ROWS = 3
TIE = 'tie'
FLOAT_FORMAT = '%.12g'


class JointConsistency(NamedTuple):
    c_pred: np.ndarray
    c_true: np.ndarray
    gap: float
    degenerate: Dict[str, List[int]]


def _pair(pred: np.ndarray, truth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 2 or pred.shape != truth.shape:
        raise DimensionError(f"predictions {pred.shape} and truth {truth.shape} must be "
            "equal [N x d] arrays")
    return pred, truth


def _original_units(pred: np.ndarray, truth: np.ndarray,
    scaler: Optional[MinMaxColumnScaler], columns: Optional[Sequence[str]]):
    if scaler is None:
        return pred, truth
    if columns is None:
        raise ContractError("de-normalizing needs the target column names")
    return scaler.inverse_columns(pred, columns), scaler.inverse_columns(truth, columns)


def mse_per_variable(pred: np.ndarray, truth: np.ndarray,
    scaler: Optional[MinMaxColumnScaler]=None,
    columns: Optional[Sequence[str]]=None) -> np.ndarray:
    """mean squared error of each column; with a scaler, in original units"""
    pred, truth = _original_units(*_pair(pred, truth), scaler, columns)
    return np.mean((pred - truth) ** 2, axis=0)


def mae_per_variable(pred: np.ndarray, truth: np.ndarray,
    scaler: Optional[MinMaxColumnScaler]=None,
    columns: Optional[Sequence[str]]=None) -> np.ndarray:
    pred, truth = _original_units(*_pair(pred, truth), scaler, columns)
    return np.mean(np.abs(pred - truth), axis=0)


def correlation_matrix(x: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Pearson correlation of the columns of x; a constant column gets zero
    correlations and a unit diagonal, and is returned in the flag list"""
    frame = pd.DataFrame(np.asarray(x, dtype=np.float64))
    degenerate = [int(k) for k in np.flatnonzero(frame.std(ddof=0).to_numpy() == 0)]
    C = frame.corr(method='pearson').to_numpy()
    C[degenerate, :] = 0.0
    C[:, degenerate] = 0.0
    C = np.clip(np.nan_to_num(C, nan=0.0), -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C, degenerate


def joint_consistency(pred: np.ndarray, truth: np.ndarray) -> JointConsistency:
    """cross-variable correlation of forecasts vs. observations and the
    Frobenius norm of their difference"""
    pred, truth = _pair(pred, truth)
    if len(pred) < MIN_JOINT_ROWS:
        raise ContractError(f"joint consistency needs at least {MIN_JOINT_ROWS} rows, "
            f"got {len(pred)}")
    c_pred, flag_pred = correlation_matrix(pred)
    c_true, flag_true = correlation_matrix(truth)
    if flag_pred or flag_true:
        logger.warning(f"zero-variance columns: predictions {flag_pred}, truth {flag_true}")
    gap = float(np.linalg.norm(c_pred - c_true, ord='fro'))
    return JointConsistency(c_pred, c_true, gap, dict(pred=flag_pred, truth=flag_true))


def discriminator_accuracy(real_scores: np.ndarray, fake_scores: np.ndarray) -> float:
    """real counts as correct above 0.5, forecasts at or below 0.5"""
    real = np.asarray(real_scores).reshape(-1)
    fake = np.asarray(fake_scores).reshape(-1)
    total = real.size + fake.size
    if total == 0:
        raise ContractError("discriminator accuracy over zero samples")
    return float((np.sum(real > 0.5) + np.sum(fake <= 0.5)) / total)


class EvalResult:
    """test-split metrics of one trained system"""

    def __init__(self, system: str, variables: Sequence[str],
        mse: Sequence[float], mae: Sequence[float], mse_scaled: Sequence[float],
        c_pred: np.ndarray, c_true: np.ndarray, joint_gap: float,
        degenerate: Optional[Dict[str, List[int]]]=None,
        disc_acc: Optional[float]=None,
        dataset_hash: Optional[str]=None):
        self.system = system
        self.variables = list(variables)
        self.mse = [float(v) for v in mse]
        self.mae = [float(v) for v in mae]
        self.mse_scaled = [float(v) for v in mse_scaled]
        self.c_pred = np.asarray(c_pred, dtype=np.float64)
        self.c_true = np.asarray(c_true, dtype=np.float64)
        self.joint_gap = float(joint_gap)
        self.degenerate = dict(degenerate or dict(pred=[], truth=[]))
        self.disc_acc = disc_acc
        self.dataset_hash = dataset_hash

    def to_dict(self) -> Dict[str, Any]:
        return dict(system=self.system, variables=self.variables,
            mse=self.mse, mae=self.mae, mse_scaled=self.mse_scaled,
            c_pred=self.c_pred.tolist(), c_true=self.c_true.tolist(),
            joint_gap=self.joint_gap, degenerate=self.degenerate,
            disc_acc=self.disc_acc, dataset_hash=self.dataset_hash)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'EvalResult':
        return cls(d['system'], d['variables'], d['mse'], d['mae'], d['mse_scaled'],
            np.asarray(d['c_pred']), np.asarray(d['c_true']), d['joint_gap'],
            d.get('degenerate'), d.get('disc_acc'), d.get('dataset_hash'))

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2))
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> 'EvalResult':
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate(trainer, dataset: WindowedDataset,
    predictions: Optional[np.ndarray]=None) -> EvalResult:
    """score a trained system on a windowed split

    :param trainer: anything with `system`, `predict(windows)` and an
        optional `discriminator`
    :param predictions: scaled [N x d] forecasts, computed when omitted
    """
    if predictions is None:
        predictions = trainer.predict(dataset.windows)
    pred, truth = _pair(predictions, dataset.targets)
    columns = dataset.target_columns
    mse = mse_per_variable(pred, truth, dataset.scaler, columns)
    mae = mae_per_variable(pred, truth, dataset.scaler, columns)
    joint = joint_consistency(*_original_units(pred, truth, dataset.scaler, columns))
    disc_acc = None
    discriminator = getattr(trainer, 'discriminator', None)
    if discriminator is not None:
        with tc.no_grad():
            disc_acc = discriminator_accuracy(discriminator.forward(truth).values,
                discriminator.forward(pred).values)
    return EvalResult(trainer.system, columns, mse, mae, mse_per_variable(pred, truth),
        joint.c_pred, joint.c_true, joint.gap, joint.degenerate, disc_acc,
        dataset.dataset_hash)


class Comparison:
    """per-variable MSE of several systems with a winner column, plus each
    system's joint-consistency gap"""

    def __init__(self, mse: pd.DataFrame, joint_gap: pd.Series):
        self.mse = mse
        self.joint_gap = joint_gap

    def winners(self) -> Dict[str, Optional[str]]:
        return self.mse['winner'].to_dict()

    def to_text(self) -> str:
        gap = self.joint_gap.to_frame('joint_gap').T
        return self.mse.to_string(float_format=lambda v: f'{v:.6g}') + '\n\n' \
            + gap.to_string(float_format=lambda v: f'{v:.6g}') + '\n'

    def write(self, out_dir: Union[str, Path]) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.mse.to_csv(out.joinpath('comparison.csv'), float_format=FLOAT_FORMAT,
            index_label='variable')
        self.joint_gap.to_csv(out.joinpath('joint_gap.csv'), float_format=FLOAT_FORMAT,
            index_label='system', header=['joint_gap'])
        return out


def compare_systems(reports: Sequence[Union[EvalResult, Tuple[str, EvalResult]]]
    ) -> Comparison:
    """winner per variable is the lowest MSE; equal minima give 'tie' and a
    lone system has no winner

    :param reports: EvalResults, or (name, EvalResult) pairs to relabel them
    """
    if not reports:
        raise ContractError("compare_systems needs at least one result")
    pairs = [r if isinstance(r, tuple) else (r.system, r) for r in reports]
    results = [r for _, r in pairs]
    variables = results[0].variables
    for name, r in pairs[1:]:
        if r.variables != variables:
            raise ContractError(f"system {name!r} covers {r.variables}, "
                f"expected {variables}")
    names = [n for n, _ in pairs]
    if len(set(names)) != len(names):
        names = [f'{n}_{k}' for k, n in enumerate(names)]
    table = pd.DataFrame({n: r.mse for n, r in zip(names, results)}, index=variables)
    winners: List[Optional[str]] = []
    for var, row in table.iterrows():
        if len(names) == 1:
            winners.append(None)
            continue
        best = row[row == row.min()].index.tolist()
        winners.append(best[0] if len(best) == 1 else TIE)
    table['winner'] = winners
    gap = pd.Series({n: r.joint_gap for n, r in zip(names, results)}, name='joint_gap')
    return Comparison(table, gap)


#################
### plot data ###
#################

def forecast_traces(dataset: WindowedDataset, predictions: np.ndarray,
    split_name: str) -> pd.DataFrame:
    """true vs. forecast values in original units, one row per target"""
    pred, truth = _original_units(*_pair(predictions, dataset.targets),
        dataset.scaler, dataset.target_columns)
    traces = pd.DataFrame(dict(split=split_name,
        timestamp=dataset.timestamps if dataset.timestamps is not None
            else np.arange(len(dataset))))
    for k, col in enumerate(dataset.target_columns):
        traces[f'{col}_true'] = truth[:, k]
        traces[f'{col}_pred'] = pred[:, k]
    return traces


def mse_bars(results: Sequence[EvalResult]) -> pd.DataFrame:
    rows = [dict(system=r.system, variable=v, mse=m, mse_scaled=s)
        for r in results for v, m, s in zip(r.variables, r.mse, r.mse_scaled)]
    return pd.DataFrame(rows, columns=['system', 'variable', 'mse', 'mse_scaled'])


def write_plot_csvs(out_dir: Union[str, Path], loss_curves: pd.DataFrame,
    traces: pd.DataFrame, results: Sequence[EvalResult]) -> Path:
    """loss_curves.csv, forecast_traces.csv and mse_bars.csv for external plotting"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loss_curves.to_csv(out.joinpath('loss_curves.csv'), index=False, float_format=FLOAT_FORMAT)
    traces.to_csv(out.joinpath('forecast_traces.csv'), index=False,
        float_format=FLOAT_FORMAT, date_format='%Y-%m-%d %H:%M:%S')
    mse_bars(results).to_csv(out.joinpath('mse_bars.csv'), index=False,
        float_format=FLOAT_FORMAT)
    return out
