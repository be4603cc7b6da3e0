"""CSV ingestion, imputation, one-hot encoding, min-max scaling, windowing and
chronological splitting"""
from __future__ import annotations
import json
import logging
from copy import deepcopy
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.preprocessing import MinMaxScaler
from .utils.exceptions import ConfigError, ContractError, EncodingError, InputError, SchemaError
from .utils.utils import content_hash, pandas_strptime

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_LOOKBACK = 24
NA_VALUES = ['NA']


class ColumnKind(str, Enum):
    CONTINUOUS = 'continuous'
    CATEGORICAL = 'categorical'
    INTEGER = 'integer'


class ImputePolicy(str, Enum):
    DROP_LEADING = 'drop_leading'
    FORWARD_FILL = 'forward_fill'


class Schema:
    """declared column kinds plus where the timestamp comes from

    :param columns: column name -> kind
    :param timestamp: a timestamp column name, or component columns in
        year/month/day/hour(/minute/second) order
    :param step: declared constant spacing, e.g. '1h' or '15min'
    """
    def __init__(self, columns: Dict[str, Union[str, ColumnKind]],
        timestamp: Union[str, List[str]]='timestamp',
        step: Optional[str]=None,
        datetime_format: Optional[str]=None):
        try:
            self.columns = {c: ColumnKind(k) for c, k in columns.items()}
        except ValueError as e:
            raise ConfigError(f"unknown column kind in schema: {e}") from e
        self.timestamp = timestamp
        self.step = step
        self.datetime_format = datetime_format

    @property
    def timestamp_columns(self) -> List[str]:
        return [self.timestamp] if isinstance(self.timestamp, str) else list(self.timestamp)

    def to_dict(self) -> Dict[str, Any]:
        return dict(columns={c: k.value for c, k in self.columns.items()},
            timestamp=self.timestamp, step=self.step,
            datetime_format=self.datetime_format)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'Schema':
        if 'columns' not in d:
            raise ConfigError("schema needs a 'columns' mapping")
        return cls(d['columns'], d.get('timestamp', 'timestamp'),
            d.get('step'), d.get('datetime_format'))

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'Schema':
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError as e:
            raise ConfigError(f"schema file {path} does not exist") from e


AIRQUALITY_SCHEMA = Schema(
    columns={
        'pm2.5': ColumnKind.CONTINUOUS,
        'DEWP': ColumnKind.CONTINUOUS,
        'TEMP': ColumnKind.CONTINUOUS,
        'PRES': ColumnKind.CONTINUOUS,
        'cbwd': ColumnKind.CATEGORICAL,
        'Iws': ColumnKind.CONTINUOUS,
        'Is': ColumnKind.INTEGER,
        'Ir': ColumnKind.INTEGER,
        },
    timestamp=['year', 'month', 'day', 'hour'],
    step='1h')
AIRQUALITY_TARGETS = ['pm2.5', 'DEWP', 'TEMP', 'PRES', 'Iws', 'Is', 'Ir']


class TimeSeriesFrame:
    """time-indexed table with column kinds, categorical vocabularies and a
    mask of the cells that were missing on load"""

    def __init__(self, data: pd.DataFrame,
        kinds: Dict[str, ColumnKind],
        vocabularies: Optional[Dict[str, List[str]]]=None,
        mask: Optional[pd.DataFrame]=None,
        step: Optional[pd.Timedelta]=None,
        indicator_columns: Optional[List[str]]=None,
        meta: Optional[Dict[str, Any]]=None,
        rejected_rows: int=0):
        self.data = data
        self.kinds = dict(kinds)
        self.vocabularies = dict(vocabularies or {})
        self.mask = mask if mask is not None else data.isna()
        self.step = step
        self.indicator_columns = list(indicator_columns or [])
        self.meta = dict(meta or {})
        self.rejected_rows = rejected_rows

    def __len__(self) -> int:
        return len(self.data)

    @property
    def columns(self) -> List[str]:
        return list(self.data.columns)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return self.data.index

    def numeric_columns(self) -> List[str]:
        """continuous and integer columns that are not one-hot indicators"""
        return [c for c in self.columns if self.kinds.get(c) != ColumnKind.CATEGORICAL
            and c not in self.indicator_columns]

    def copy(self) -> 'TimeSeriesFrame':
        return TimeSeriesFrame(self.data.copy(), self.kinds,
            deepcopy(self.vocabularies), self.mask.copy(), self.step,
            self.indicator_columns, deepcopy(self.meta), self.rejected_rows)


###############
### loading ###
###############

def load_csv(path: Union[str, Path], schema: Schema) -> TimeSeriesFrame:
    """parse a header+comma CSV ('NA' = missing) into a TimeSeriesFrame
    :param schema: declared columns; extra file columns are ignored
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file {path} does not exist")
    try:
        raw = pd.read_csv(path, dtype=str, na_values=NA_VALUES,
            keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise InputError(f"input file {path} is empty") from e
    raw.columns = [c.strip() for c in raw.columns]
    for col in list(schema.timestamp_columns) + list(schema.columns):
        if col not in raw.columns:
            raise SchemaError(f"column {col!r} declared in the schema is missing from {path}")
    if raw.empty:
        raise InputError(f"input file {path} has a header but no rows")

    ts_key = schema.timestamp if isinstance(schema.timestamp, str) else list(schema.timestamp)
    stamps, rejected = pandas_strptime(raw, ts_key, datetime_format=schema.datetime_format)
    if rejected:
        logger.warning(f"{path}: rejected {rejected} rows with unparseable timestamps")
    keep = stamps.notna().to_numpy()
    if not keep.any():
        raise InputError(f"{path}: no row has a parseable timestamp")

    data = pd.DataFrame(index=pd.DatetimeIndex(stamps[keep], name='timestamp'))
    for col, kind in schema.columns.items():
        values = raw.loc[keep, col]
        if kind == ColumnKind.CATEGORICAL:
            values = values.str.strip().replace('', np.nan)
            data[col] = values.to_numpy(dtype=object)
        else:
            data[col] = pd.to_numeric(values, errors='coerce').to_numpy(dtype=np.float64)

    index = data.index
    if not (index.is_monotonic_increasing and index.is_unique):
        raise InputError(f"{path}: timestamps are not strictly increasing")
    step = pd.Timedelta(schema.step) if schema.step else None
    if len(index) > 1:
        diffs = pd.Series(index[1:] - index[:-1])
        if step is None:
            step = diffs.mode().iloc[0]
        irregular = int((diffs != step).sum())
        if irregular and not rejected:
            raise InputError(f"{path}: {irregular} gaps differ from the declared step {step}")
        elif irregular:
            logger.warning(f"{path}: {irregular} irregular steps left by rejected rows")

    vocab = {col: sorted(data[col].dropna().unique().tolist())
        for col, kind in schema.columns.items() if kind == ColumnKind.CATEGORICAL}
    logger.info(f"loaded {len(data)} rows x {len(schema.columns)} columns from {path}")
    return TimeSeriesFrame(data, schema.columns, vocab, step=step,
        rejected_rows=rejected)


##################
### transforms ###
##################

def impute(frame: TimeSeriesFrame,
    policy: Union[str, ImputePolicy]=ImputePolicy.DROP_LEADING,
    target_columns: Optional[Sequence[str]]=None) -> TimeSeriesFrame:
    """fill missing cells by carrying the last observation forward; values
    never flow backwards in time
    :param policy: 'drop_leading' first drops the initial run of rows with a
        missing target; 'forward_fill' keeps them
    :param target_columns: columns whose leading gap is dropped; all columns
        when None
    Rows still incomplete after the forward fill (before a column's first
    observation) are dropped under either policy.
    """
    policy = ImputePolicy(policy)
    targets = list(target_columns) if target_columns is not None else frame.columns
    out = frame.copy()
    if not out.data.isna().values.any():
        return out
    present = out.data[targets].notna().all(axis=1).to_numpy()
    if not present.any():
        raise InputError("every row has a missing target value")
    if policy == ImputePolicy.DROP_LEADING:
        first = int(np.argmax(present))
        if first:
            logger.info(f"dropping {first} leading rows with missing targets")
        out.data = out.data.iloc[first:]
        out.mask = out.mask.iloc[first:]
    out.data = out.data.ffill()
    complete = out.data.notna().all(axis=1).to_numpy()
    if not complete.any():
        empty = [c for c in out.columns if out.data[c].isna().all()]
        raise InputError(f"columns {empty} have no observed values")
    first = int(np.argmax(complete))
    if first:
        logger.info(f"dropping {first} leading rows with no earlier value to carry forward")
        out.data = out.data.iloc[first:]
        out.mask = out.mask.iloc[first:]
    return out


def encode_categorical(frame: TimeSeriesFrame, column: str,
    vocabulary: Optional[Sequence[str]]=None) -> TimeSeriesFrame:
    """replace a categorical column by one indicator column per category
    (`<column>_<category>`, categories in lexicographic order)"""
    if frame.kinds.get(column) != ColumnKind.CATEGORICAL:
        raise ContractError(f"column {column!r} is not declared categorical")
    vocab = sorted(vocabulary if vocabulary is not None else frame.vocabularies.get(column, []))
    values = frame.data[column]
    unseen = sorted(set(values.dropna()) - set(vocab))
    if unseen:
        raise EncodingError(f"column {column!r} has categories {unseen} outside the "
            f"vocabulary {vocab}")
    out = frame.copy()
    pos = out.columns.index(column)
    names = [f'{column}_{cat}' for cat in vocab]
    indicators = pd.DataFrame({n: (values == cat).astype(np.float64)
        for n, cat in zip(names, vocab)}, index=values.index)
    out.data = pd.concat([out.data.iloc[:, :pos], indicators,
        out.data.iloc[:, pos + 1:]], axis=1)
    out.mask = pd.concat([out.mask.drop(columns=[column]),
        pd.DataFrame(False, index=out.mask.index, columns=names)], axis=1)
    out.kinds.pop(column)
    out.kinds.update({n: ColumnKind.INTEGER for n in names})
    out.indicator_columns += names
    out.vocabularies[column] = list(vocab)
    return out


def encode_all_categorical(frame: TimeSeriesFrame,
    vocabularies: Optional[Dict[str, Sequence[str]]]=None) -> TimeSeriesFrame:
    vocabularies = vocabularies or {}
    for col, kind in list(frame.kinds.items()):
        if kind == ColumnKind.CATEGORICAL:
            frame = encode_categorical(frame, col, vocabularies.get(col))
    return frame


class MinMaxColumnScaler:
    """sklearn MinMaxScaler bound to named columns; constant columns map to 0"""

    def __init__(self, columns: Sequence[str], scaler: MinMaxScaler):
        self.columns = list(columns)
        self.scaler = scaler

    @classmethod
    def fit(cls, data: pd.DataFrame, columns: Sequence[str]) -> 'MinMaxColumnScaler':
        scaler = MinMaxScaler(feature_range=(0, 1))
        scaler.fit(data[list(columns)].to_numpy(dtype=np.float64))
        return cls(columns, scaler)

    @property
    def data_min(self) -> np.ndarray:
        return self.scaler.data_min_

    @property
    def data_max(self) -> np.ndarray:
        return self.scaler.data_max_

    def _index(self, columns: Sequence[str]) -> np.ndarray:
        missing = [c for c in columns if c not in self.columns]
        if missing:
            raise SchemaError(f"columns {missing} were not fitted by the scaler")
        return np.array([self.columns.index(c) for c in columns], dtype=int)

    def transform(self, data: pd.DataFrame) -> pd.DataFrame:
        out = data.copy()
        out[self.columns] = self.scaler.transform(data[self.columns].to_numpy(dtype=np.float64))
        return out

    def inverse_transform(self, data: pd.DataFrame) -> pd.DataFrame:
        out = data.copy()
        out[self.columns] = self.scaler.inverse_transform(data[self.columns].to_numpy(dtype=np.float64))
        return out

    def inverse_columns(self, values: np.ndarray, columns: Sequence[str]) -> np.ndarray:
        """undo scaling for an [N x k] array whose columns are `columns`"""
        idx = self._index(columns)
        return (np.asarray(values, dtype=np.float64) - self.scaler.min_[idx]) / self.scaler.scale_[idx]

    def to_dict(self) -> Dict[str, Any]:
        return dict(columns=self.columns, min=self.data_min.tolist(), max=self.data_max.tolist())

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'MinMaxColumnScaler':
        # fitting on the two rows [min; max] reproduces the stored scaler exactly
        bounds = pd.DataFrame(np.vstack([d['min'], d['max']]), columns=d['columns'])
        return cls.fit(bounds, d['columns'])


def scale_fit_transform(frame: TimeSeriesFrame, train_fraction: float,
    columns: Optional[Sequence[str]]=None,
    n_rows: Optional[int]=None
    ) -> Tuple[TimeSeriesFrame, MinMaxColumnScaler]:
    """min-max scale numeric columns using only the training rows
    :param n_rows: rows to fit on; the first train_fraction of the frame when None
    """
    if not 0 < train_fraction <= 1:
        raise ConfigError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    columns = list(columns) if columns is not None else frame.numeric_columns()
    if n_rows is None:
        n_rows = int(np.floor(len(frame) * train_fraction + 1e-9))
    n_fit = min(len(frame), max(1, int(n_rows)))
    scaler = MinMaxColumnScaler.fit(frame.data.iloc[:n_fit], columns)
    out = frame.copy()
    out.data = scaler.transform(frame.data)
    return out, scaler


#################
### windowing ###
#################

class WindowedDataset:
    """supervised (lookback window, next target vector) pairs

    :param windows: [N x lookback x features], scaled
    :param targets: [N x d], scaled
    :param target_rows: frame row index of each target
    """
    def __init__(self, windows: np.ndarray, targets: np.ndarray,
        feature_columns: Sequence[str], target_columns: Sequence[str],
        lookback: int, horizon: int=1,
        scaler: Optional[MinMaxColumnScaler]=None,
        target_rows: Optional[np.ndarray]=None,
        timestamps: Optional[pd.DatetimeIndex]=None,
        split_index: Optional[int]=None,
        vocabularies: Optional[Dict[str, List[str]]]=None,
        dataset_hash: Optional[str]=None):
        self.windows = windows
        self.targets = targets
        self.feature_columns = list(feature_columns)
        self.target_columns = list(target_columns)
        self.lookback = lookback
        self.horizon = horizon
        self.scaler = scaler
        self.target_rows = target_rows if target_rows is not None else np.arange(len(targets))
        self.timestamps = timestamps
        self.split_index = split_index
        self.vocabularies = dict(vocabularies or {})
        self.dataset_hash = dataset_hash

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_variables(self) -> int:
        return self.targets.shape[1]

    @property
    def n_features(self) -> int:
        return self.windows.shape[2]

    def subset(self, start: int, stop: int) -> 'WindowedDataset':
        return WindowedDataset(self.windows[start:stop], self.targets[start:stop],
            self.feature_columns, self.target_columns, self.lookback, self.horizon,
            self.scaler, self.target_rows[start:stop],
            self.timestamps[start:stop] if self.timestamps is not None else None,
            self.split_index, self.vocabularies, self.dataset_hash)

    def metadata(self) -> Dict[str, Any]:
        """what a checkpoint needs to rebuild inputs and de-normalize outputs"""
        return dict(feature_columns=self.feature_columns,
            target_columns=self.target_columns,
            lookback=self.lookback, horizon=self.horizon,
            scaler=self.scaler.to_dict() if self.scaler else None,
            vocabularies=self.vocabularies,
            dataset_hash=self.dataset_hash)


def make_windows(frame: TimeSeriesFrame, lookback: int,
    target_columns: Sequence[str], horizon: int=1,
    feature_columns: Optional[Sequence[str]]=None) -> WindowedDataset:
    """window j = rows [j, j+lookback); target j = row j+lookback+horizon-1"""
    if lookback < 1 or horizon < 1:
        raise ConfigError(f"lookback and horizon must be >= 1, got {lookback}, {horizon}")
    target_columns = list(target_columns)
    feature_columns = list(feature_columns) if feature_columns is not None else frame.columns
    for col in target_columns + feature_columns:
        if col not in frame.data.columns:
            raise SchemaError(f"column {col!r} is not in the frame")
    rows = len(frame)
    n = rows - lookback - horizon + 1
    if n < 1:
        raise InputError(f"frame of {rows} rows is too short for lookback {lookback} "
            f"and horizon {horizon}")
    X = frame.data[feature_columns].to_numpy(dtype=np.float64)
    if np.isnan(X).any():
        raise InputError("frame still has missing values; impute before windowing")
    windows = sliding_window_view(X, lookback, axis=0)[:n].transpose(0, 2, 1)
    first = lookback + horizon - 1
    target_rows = np.arange(first, first + n)
    targets = frame.data[target_columns].to_numpy(dtype=np.float64)[target_rows]
    return WindowedDataset(np.ascontiguousarray(windows), targets,
        feature_columns, target_columns, lookback, horizon,
        target_rows=target_rows, timestamps=frame.timestamps[target_rows],
        vocabularies=frame.vocabularies)


def train_window_count(n: int, train_fraction: float) -> int:
    n_train = int(np.floor(n * train_fraction + 1e-9))
    if n_train < 1 or n_train >= n:
        raise ConfigError(f"train_fraction {train_fraction} leaves an empty split of {n} windows")
    return n_train


def split(dataset: WindowedDataset, train_fraction: float=DEFAULT_TRAIN_FRACTION
    ) -> Tuple[WindowedDataset, WindowedDataset]:
    """chronological split; input windows may straddle the boundary, targets don't"""
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    n_train = train_window_count(n, train_fraction)
    dataset.split_index = n_train
    return dataset.subset(0, n_train), dataset.subset(n_train, n)


################
### pipeline ###
################

def prepare_dataset(frame: TimeSeriesFrame, lookback: int,
    target_columns: Sequence[str],
    train_fraction: float=DEFAULT_TRAIN_FRACTION,
    horizon: int=1,
    impute_policy: Union[str, ImputePolicy]=ImputePolicy.DROP_LEADING,
    dataset_hash: Optional[str]=None,
    ) -> Tuple[WindowedDataset, WindowedDataset]:
    """impute -> one-hot -> scale (train rows only) -> windows -> split"""
    for col in target_columns:
        if frame.kinds.get(col) == ColumnKind.CATEGORICAL:
            raise ConfigError(f"categorical column {col!r} cannot be a forecast target")
        if col not in frame.kinds:
            raise SchemaError(f"target column {col!r} is not in the frame")
    frame = impute(frame, impute_policy, target_columns)
    frame = encode_all_categorical(frame)
    # fit on every row a training window or target reads, and nothing later;
    # bad lookback / fraction values fall through to make_windows and split
    n_rows = None
    n = len(frame) - lookback - horizon + 1
    if lookback >= 1 and horizon >= 1 and n > 1 and 0 < train_fraction < 1:
        n_rows = lookback + horizon - 1 + train_window_count(n, train_fraction)
    frame, scaler = scale_fit_transform(frame, train_fraction, n_rows=n_rows)
    dataset = make_windows(frame, lookback, target_columns, horizon)
    dataset.scaler = scaler
    dataset.dataset_hash = dataset_hash
    return split(dataset, train_fraction)


def frame_to_window(frame: TimeSeriesFrame, meta: Dict[str, Any]) -> np.ndarray:
    """the last `lookback` rows of a raw frame as a scaled [1 x lookback x F]
    window, using the vocabularies and scaler stored with a checkpoint"""
    lookback = int(meta['lookback'])
    if len(frame) < lookback:
        raise InputError(f"window has {len(frame)} rows, the model needs {lookback}")
    frame = impute(frame, ImputePolicy.FORWARD_FILL)
    if len(frame) < lookback:
        raise InputError(f"window has {len(frame)} complete rows after filling, the model "
            f"needs {lookback}")
    frame = encode_all_categorical(frame, meta.get('vocabularies'))
    missing = [c for c in meta['feature_columns'] if c not in frame.data.columns]
    if missing:
        raise SchemaError(f"input lacks feature columns {missing}")
    data = frame.data
    if meta.get('scaler'):
        data = MinMaxColumnScaler.from_dict(meta['scaler']).transform(data)
    X = data[meta['feature_columns']].to_numpy(dtype=np.float64)[-lookback:]
    return X[None, :, :]


def dataset_hash(source: Union[str, Path, Dict], options: Dict[str, Any]) -> str:
    """sha256 of the input file bytes (or synthetic spec) and pipeline options"""
    if isinstance(source, dict):
        return content_hash(source, options)
    if not Path(source).is_file():
        raise InputError(f"{source} does not exist")
    return content_hash(Path(source), options)


def load_or_build_cached(path: Union[str, Path], schema: Schema,
    options: Dict[str, Any], cache_dir: Optional[Union[str, Path]]=None
    ) -> Tuple[WindowedDataset, WindowedDataset]:
    """prepare_dataset on a CSV, memoized on disk by dataset_hash
    :param options: lookback, target_columns, train_fraction, horizon, impute_policy
    """
    options = dict(options, schema=schema.to_dict())
    key = dataset_hash(path, options)
    cache = Path(cache_dir).joinpath(f'{key}.npz') if cache_dir else None
    if cache is not None and cache.exists():
        logger.info(f"dataset cache hit {cache}")
        with np.load(cache, allow_pickle=False) as npz:
            meta = json.loads(npz['meta'].tobytes().decode())
            full = WindowedDataset(npz['windows'], npz['targets'],
                meta['feature_columns'], meta['target_columns'],
                meta['lookback'], meta['horizon'],
                MinMaxColumnScaler.from_dict(meta['scaler']),
                npz['target_rows'], pd.DatetimeIndex(npz['timestamps'].astype('datetime64[ns]')),
                vocabularies=meta['vocabularies'], dataset_hash=key)
        return split(full, options['train_fraction'])
    frame = load_csv(path, schema)
    train, test = prepare_dataset(frame, options['lookback'], options['target_columns'],
        options.get('train_fraction', DEFAULT_TRAIN_FRACTION), options.get('horizon', 1),
        options.get('impute_policy', ImputePolicy.DROP_LEADING), dataset_hash=key)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        full = _concat(train, test)
        np.savez(cache, windows=full.windows, targets=full.targets,
            target_rows=full.target_rows,
            timestamps=full.timestamps.asi8,
            meta=np.frombuffer(json.dumps(full.metadata()).encode(), dtype=np.uint8))
        logger.info(f"dataset cached to {cache}")
    return train, test


def _concat(train: WindowedDataset, test: WindowedDataset) -> WindowedDataset:
    return WindowedDataset(np.concatenate([train.windows, test.windows]),
        np.concatenate([train.targets, test.targets]),
        train.feature_columns, train.target_columns, train.lookback, train.horizon,
        train.scaler, np.concatenate([train.target_rows, test.target_rows]),
        train.timestamps.append(test.timestamps), train.split_index,
        train.vocabularies, train.dataset_hash)
