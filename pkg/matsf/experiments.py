"""multi-seed comparison of the adversarial system against the baselines on
synthetic data with a known cross-variable law"""
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Dict, List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from ._abstract import AbstractTrainer, TrainConfig
from .baselines import BaselineKind, MultiOutputTrainer, ParallelTrainer
from .data import DEFAULT_LOOKBACK, DEFAULT_TRAIN_FRACTION, WindowedDataset, dataset_hash, prepare_dataset
from .evaluation import MIN_JOINT_ROWS, evaluate
from .models import build_discriminator, build_forecasters
from .synth import CoupledProcessSpec, generate, synth_columns
from .trainer import AdversarialTrainer
from .utils.exceptions import ConfigError, DivergenceError, InputError

logger = logging.getLogger(__name__)

ADVERSARIAL = 'adversarial'
SYSTEMS = (ADVERSARIAL, BaselineKind.PARALLEL_SINGLE_OUTPUT.value,
    BaselineKind.MULTI_OUTPUT.value)
MSE_TOLERANCE = 0.15
DISC_ACC_BAND = (0.35, 0.70)
FLOOR_FACTOR = 2.0
UNTRAINED_FACTOR = 10.0
SWEEP_DEFAULTS = dict(lookback=DEFAULT_LOOKBACK, hidden_sizes=[16], disc_hidden_sizes=None,
    train_fraction=DEFAULT_TRAIN_FRACTION, train={})


def build_trainer(system: str, n_features: int, n_variables: int,
    hidden_sizes: Sequence[int], cfg: TrainConfig,
    disc_hidden_sizes: Optional[Sequence[int]]=None) -> AbstractTrainer:
    """fresh models seeded from cfg.seed, wrapped in the system's trainer"""
    seed = int(cfg.seed)
    if system == ADVERSARIAL:
        return AdversarialTrainer(build_forecasters(n_features, hidden_sizes, n_variables, seed),
            build_discriminator(n_variables, disc_hidden_sizes, seed), cfg)
    elif system == BaselineKind.PARALLEL_SINGLE_OUTPUT:
        return ParallelTrainer(build_forecasters(n_features, hidden_sizes, n_variables, seed), cfg)
    elif system == BaselineKind.MULTI_OUTPUT:
        return MultiOutputTrainer(build_forecasters(n_features, hidden_sizes, n_variables, seed,
            multi_output=True)[0], cfg)
    raise ConfigError(f"unknown system {system!r}; takes {list(SYSTEMS)}")


def synthetic_splits(spec: CoupledProcessSpec, lookback: int=DEFAULT_LOOKBACK,
    train_fraction: float=DEFAULT_TRAIN_FRACTION
    ) -> Tuple[WindowedDataset, WindowedDataset]:
    columns = synth_columns(spec.d)
    options = dict(lookback=lookback, target_columns=columns, train_fraction=train_fraction)
    return prepare_dataset(generate(spec), lookback, columns, train_fraction,
        dataset_hash=dataset_hash(spec.to_dict(), options))


def _run_one(seed: int, system: str, train: WindowedDataset, test: WindowedDataset,
    run_config: Dict[str, Any]) -> Dict[str, Any]:
    cfg = TrainConfig(run_config['train'], seed=seed)
    trainer = build_trainer(system, train.n_features, train.n_variables,
        run_config['hidden_sizes'], cfg, run_config['disc_hidden_sizes'])
    row: Dict[str, Any] = dict(seed=seed, system=system)
    try:
        report = trainer.fit(train, test)
    except DivergenceError as e:
        logger.error(f"seed {seed} {system}: {e}")
        return dict(row, status='diverged')
    result = evaluate(trainer, test)
    row.update({f'mse_{v}': m for v, m in zip(result.variables, result.mse)})
    row.update({f'initial_mse_{v}': m for v, m in zip(result.variables, report.initial_test_mse)})
    row.update(mse_mean=float(np.mean(result.mse)), joint_gap=result.joint_gap,
        disc_acc=report.epochs[-1]['disc_acc'] if report.epochs else None,
        status=report.status)
    logger.info(f"seed {seed} {system}: mse {result.mse} gap {result.joint_gap:.4f}")
    return row


def run_seed_sweep(spec: CoupledProcessSpec, seeds: Sequence[int],
    run_config: Optional[Dict[str, Any]]=None,
    systems: Sequence[str]=(ADVERSARIAL, BaselineKind.PARALLEL_SINGLE_OUTPUT.value),
    max_workers: int=1) -> pd.DataFrame:
    """train every system once per seed on one shared split; one row per
    (seed, system), sorted so concurrency does not change the output"""
    run_config = dict(SWEEP_DEFAULTS, **(run_config or {}))
    train, test = synthetic_splits(spec, int(run_config['lookback']),
        float(run_config['train_fraction']))
    if len(test) < MIN_JOINT_ROWS:
        raise InputError(f"test split has {len(test)} windows, evaluation needs at least "
            f"{MIN_JOINT_ROWS}")
    jobs = [(int(s), system) for s in seeds for system in systems]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(_run_one, s, system, train, test, run_config)
            for s, system in jobs]
        rows = [future.result() for future in as_completed(futures)]
    frame = pd.DataFrame(rows)
    order = {s: k for k, s in enumerate(systems)}
    frame['_order'] = frame['system'].map(order)
    return frame.sort_values(['seed', '_order']).drop(columns='_order').reset_index(drop=True)


def _variables(frame: pd.DataFrame) -> List[str]:
    return [c[len('mse_'):] for c in frame.columns if c.startswith('mse_') and c != 'mse_mean']


def summarize_sweep(frame: pd.DataFrame,
    floor: Optional[Sequence[float]]=None) -> Dict[str, Any]:
    """per-system medians plus pass/fail verdicts; the compared numbers are
    kept next to each verdict whether it passes or not"""
    variables = _variables(frame)
    ok = frame[frame['status'] == 'completed']
    # a sweep where every run diverged has no metric columns
    metrics = [c for c in [f'mse_{v}' for v in variables] + ['joint_gap'] if c in ok.columns]
    medians = ok.groupby('system')[metrics].median() if metrics and len(ok) else pd.DataFrame()
    summary: Dict[str, Any] = dict(variables=variables, runs=int(len(frame)),
        diverged=int((frame['status'] == 'diverged').sum()),
        medians={s: {k: float(v) for k, v in row.items()} for s, row in medians.iterrows()},
        verdicts={})
    verdicts = summary['verdicts']
    parallel = BaselineKind.PARALLEL_SINGLE_OUTPUT.value
    if ADVERSARIAL in medians.index and parallel in medians.index:
        adv, par = medians.loc[ADVERSARIAL], medians.loc[parallel]
        verdicts['joint_gap'] = dict(adversarial=float(adv['joint_gap']),
            parallel=float(par['joint_gap']),
            passed=bool(adv['joint_gap'] < par['joint_gap']))
        ratios = {v: float(adv[f'mse_{v}'] / par[f'mse_{v}']) for v in variables}
        verdicts['mse_parity'] = dict(ratios=ratios, tolerance=MSE_TOLERANCE,
            passed=all(abs(r - 1) <= MSE_TOLERANCE for r in ratios.values()))
    if ADVERSARIAL in medians.index:
        accs = ok.loc[ok['system'] == ADVERSARIAL, 'disc_acc'].astype(float).tolist()
        lo, hi = DISC_ACC_BAND
        verdicts['equilibrium'] = dict(disc_acc=accs, band=[lo, hi],
            passed=bool(accs) and all(lo <= a <= hi for a in accs))
    if floor is not None:
        floor = np.broadcast_to(np.asarray(floor, dtype=np.float64), (len(variables),))
        learning = {}
        for system, group in ok.groupby('system'):
            mse = group[[f'mse_{v}' for v in variables]].median().to_numpy()
            initial = group[[f'initial_mse_{v}' for v in variables]].median().to_numpy()
            learning[system] = dict(mse=mse.tolist(), floor=floor.tolist(),
                initial=initial.tolist(),
                passed=bool(np.all(mse <= FLOOR_FACTOR * floor)
                    and np.all(mse * UNTRAINED_FACTOR <= initial)))
        verdicts['learning'] = learning
    return summary
