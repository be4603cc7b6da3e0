from __future__ import annotations
import hashlib
import itertools
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd


SEED_ENV_VAR = "MATSF_SEED"
DEFAULT_SEED = 0

# independent random streams derived from one user seed
STREAM_FORECASTER = 1
STREAM_DISCRIMINATOR = 2
STREAM_SHUFFLE = 3
STREAM_SYNTH = 4


def pandas_strptime(df: pd.DataFrame, 
    index_name: Union[str, List[str]],
    datetime_format: Optional[str]=None) -> Tuple[pd.Series, int]:
    """converts a str datetime column, or a list of component columns 
    (year, month, day, hour, ...), into a datetime64 series
    :param index_name: column name holding the timestamp, or the component 
        column names in year/month/day/hour order
    :param datetime_format: datetime.strptime format for single columns; 
        inferred when None
    :return: the parsed series and the number of unparseable rows (NaT)
    """
    if isinstance(index_name, str):
        parsed = pd.to_datetime(df.loc[:, index_name], 
            format=datetime_format, errors='coerce')
    elif isinstance(index_name, list):
        names = ['year', 'month', 'day', 'hour', 'minute', 'second']
        assert len(index_name) <= len(names), 'at most 6 timestamp components are supported'
        parts = {unit: pd.to_numeric(df.loc[:, col], errors='coerce') 
            for unit, col in zip(names, index_name)}
        parsed = pd.to_datetime(pd.DataFrame(parts), errors='coerce')
    else:
        raise TypeError("index_name must be a string or a list of strings")
    return parsed, int(parsed.isna().sum())


def iter_by_chunk(iterable: Any, chunk_size: int):
    """iterate by chunk size"""
    it = iter(iterable)
    while True:
        chunk = tuple(itertools.islice(it, chunk_size))
        if not chunk:
            break
        yield chunk


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """counter-based (Philox) generator for one named stream of a seed; 
    streams never share state so e.g. shuffling does not perturb init"""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(seq))


def resolve_seed(*candidates: Optional[int]) -> int:
    """first non-None candidate, then $MATSF_SEED, then DEFAULT_SEED"""
    for c in candidates:
        if c is not None:
            return int(c)
    env = os.environ.get(SEED_ENV_VAR)
    if env not in (None, ''):
        return int(env)
    return DEFAULT_SEED


def content_hash(*parts: Union[bytes, str, Dict, Path]) -> str:
    """sha256 over file bytes / strings / canonical JSON of dicts"""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, Path):
            h.update(p.read_bytes())
        elif isinstance(p, bytes):
            h.update(p)
        elif isinstance(p, dict):
            h.update(json.dumps(p, sort_keys=True, default=str).encode())
        else:
            h.update(str(p).encode())
        h.update(b'\x00')
    return h.hexdigest()


def params_checksum(params: Sequence[Any]) -> str:
    """digest of parameter values, used to assert a party was not updated"""
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p.values).tobytes())
    return h.hexdigest()
