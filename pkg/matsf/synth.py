"""VAR(1)-plus-drive synthetic series with a known cross-variable law

x_t = A x_{t-1} + drive(t) + eps_t,  eps_t ~ N(0, diag(noise_std^2))

With the drive known, the one-step optimal predictor is A x_{t-1} + drive(t)
and its error variance is noise_std^2, which gives the forecasters an
analytic MSE floor.
"""
from __future__ import annotations
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union
import numpy as np
import pandas as pd
from .data import ColumnKind, Schema, TimeSeriesFrame
from .utils.exceptions import ConfigError
from .utils.utils import STREAM_SYNTH, make_rng

logger = logging.getLogger(__name__)

REFERENCE_LENGTH = 100_000
START = pd.Timestamp('2010-01-01')
STEP = '1h'


class DriveKind(str, Enum):
    SINUSOID = 'sinusoid'
    RANDOM_WALK = 'random_walk'


class CoupledProcessSpec:
    """
    :param coupling: d x d matrix A, spectral radius < 1
    :param noise_std: per-variable innovation std (scalar broadcasts)
    :param drive: 'sinusoid' (amplitude, period, phase per variable) or
        'random_walk' (step_std per variable)
    """
    def __init__(self, coupling: Union[np.ndarray, Sequence[Sequence[float]]],
        noise_std: Union[float, Sequence[float]]=0.1,
        drive: Union[str, DriveKind]=DriveKind.SINUSOID,
        drive_params: Optional[Dict[str, Any]]=None,
        length: int=5000,
        seed: int=0):
        A = np.atleast_2d(np.asarray(coupling, dtype=np.float64))
        if A.shape[0] != A.shape[1]:
            raise ConfigError(f"coupling matrix must be square, got {A.shape}")
        self.d = A.shape[0]
        self.coupling = A
        self.noise_std = np.broadcast_to(np.asarray(noise_std, dtype=np.float64), (self.d,)).copy()
        try:
            self.drive = DriveKind(drive)
        except ValueError as e:
            raise ConfigError(f"unknown drive {drive!r}") from e
        self.drive_params = dict(drive_params or {})
        self.length = int(length)
        self.seed = int(seed)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.coupling))))

    def validate(self):
        if self.spectral_radius >= 1:
            raise ConfigError(f"coupling matrix is not stable: spectral radius "
                f"{self.spectral_radius:.4f} >= 1")
        if not np.all(self.noise_std > 0):
            raise ConfigError(f"noise_std must be positive, got {self.noise_std.tolist()}")
        if self.length < 2:
            raise ConfigError(f"length must be >= 2, got {self.length}")

    def with_length(self, length: int) -> 'CoupledProcessSpec':
        return CoupledProcessSpec(self.coupling, self.noise_std, self.drive,
            self.drive_params, length, self.seed)

    def to_dict(self) -> Dict[str, Any]:
        return dict(coupling=self.coupling.tolist(), noise_std=self.noise_std.tolist(),
            drive=self.drive.value, drive_params=self.drive_params,
            length=self.length, seed=self.seed)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'CoupledProcessSpec':
        return cls(d['coupling'], d.get('noise_std', 0.1), d.get('drive', 'sinusoid'),
            d.get('drive_params'), d.get('length', 5000), d.get('seed', 0))


def _per_variable(value: Any, d: int, default: Sequence[float]) -> np.ndarray:
    if value is None:
        return np.asarray(default, dtype=np.float64)
    return np.broadcast_to(np.asarray(value, dtype=np.float64), (d,)).copy()


def _drive(spec: CoupledProcessSpec, rng: np.random.Generator) -> np.ndarray:
    d, T, p = spec.d, spec.length, spec.drive_params
    t = np.arange(T, dtype=np.float64)[:, None]
    if spec.drive == DriveKind.SINUSOID:
        amplitude = _per_variable(p.get('amplitude'), d, np.ones(d))
        period = _per_variable(p.get('period'), d, 24.0 * (1 + np.arange(d) / d))
        phase = _per_variable(p.get('phase'), d, 2 * np.pi * np.arange(d) / d)
        return amplitude * np.sin(2 * np.pi * t / period + phase)
    step_std = _per_variable(p.get('step_std'), d, np.full(d, 0.01))
    return np.cumsum(rng.normal(0.0, step_std, size=(T, d)), axis=0)


def simulate(spec: CoupledProcessSpec) -> np.ndarray:
    """[length x d] realization; deterministic in spec.seed"""
    spec.validate()
    rng = make_rng(spec.seed, STREAM_SYNTH)
    drive = _drive(spec, rng)
    eps = rng.normal(0.0, 1.0, size=(spec.length, spec.d)) * spec.noise_std
    A = spec.coupling
    x = np.zeros((spec.length, spec.d))
    prev = np.zeros(spec.d)
    for k in range(spec.length):
        prev = A @ prev + drive[k] + eps[k]
        x[k] = prev
    return x


def generate(spec: CoupledProcessSpec) -> TimeSeriesFrame:
    """simulate and wrap as an hourly TimeSeriesFrame carrying the true A"""
    x = simulate(spec)
    columns = synth_columns(spec.d)
    index = pd.date_range(START, periods=spec.length, freq=STEP, name='timestamp')
    data = pd.DataFrame(x, index=index, columns=columns)
    logger.info(f"generated {spec.length} x {spec.d} VAR(1) series "
        f"(spectral radius {spec.spectral_radius:.3f})")
    return TimeSeriesFrame(data, {c: ColumnKind.CONTINUOUS for c in columns},
        step=pd.Timedelta(STEP), meta=dict(coupling=spec.coupling.tolist(),
            noise_std=spec.noise_std.tolist(), spec=spec.to_dict()))


def true_cross_correlation(spec: CoupledProcessSpec,
    length: int=REFERENCE_LENGTH) -> np.ndarray:
    """empirical Pearson correlation of a long realization (unit diagonal)"""
    x = simulate(spec.with_length(max(length, spec.length)))
    C = np.corrcoef(x, rowvar=False)
    np.fill_diagonal(C, 1.0)
    return C


def optimal_mse_floor(spec: CoupledProcessSpec) -> np.ndarray:
    """per-variable error variance of the one-step optimal predictor"""
    return spec.noise_std ** 2


def coupled_spec(d: int=3, coupling: float=0.4, self_weight: float=0.5,
    noise_std: float=0.1, length: int=5000, seed: int=0,
    drive: Union[str, DriveKind]=DriveKind.SINUSOID) -> CoupledProcessSpec:
    """A = self_weight * I + coupling * P, P the cyclic shift, so variable i
    is driven by variable i+1; spectral radius = self_weight + coupling"""
    A = self_weight * np.eye(d)
    if d > 1:
        A += coupling * np.roll(np.eye(d), 1, axis=1)
    return CoupledProcessSpec(A, noise_std, drive, length=length, seed=seed)


def parse_synth_arg(arg: str, seed: Optional[int]=None) -> CoupledProcessSpec:
    """'d=3,length=5000,coupling=0.4,self_weight=0.5,noise_std=0.1,drive=sinusoid'
    or a path to a JSON spec"""
    path = Path(arg)
    if arg.endswith('.json') and path.exists():
        spec = CoupledProcessSpec.from_dict(json.loads(path.read_text()))
        if seed is not None:
            spec.seed = int(seed)
        return spec
    kwargs: Dict[str, Any] = {}
    casts = dict(d=int, length=int, seed=int, coupling=float,
        self_weight=float, noise_std=float, drive=str)
    for item in filter(None, (s.strip() for s in arg.split(','))):
        key, sep, value = item.partition('=')
        if not sep or key not in casts:
            raise ConfigError(f"bad synth option {item!r}; takes {sorted(casts)}")
        try:
            kwargs[key] = casts[key](value)
        except ValueError as e:
            raise ConfigError(f"bad value for synth option {key}: {value!r}") from e
    if seed is not None and 'seed' not in kwargs:
        kwargs['seed'] = int(seed)
    return coupled_spec(**kwargs)


def synth_columns(d: int):
    return [f'x{i}' for i in range(d)]


def synth_schema(d: int) -> Schema:
    return Schema({c: ColumnKind.CONTINUOUS for c in synth_columns(d)},
        timestamp='timestamp', step=STEP)


def write_csv(frame: TimeSeriesFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.data.to_csv(path, float_format='%.17g', date_format='%Y-%m-%d %H:%M:%S')
    return path
