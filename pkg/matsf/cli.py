"""command line: train / compare / forecast / synth / sweep

exit codes: 0 ok, 1 config error, 2 data error, 3 divergence
"""
from __future__ import annotations
import functools
import json
import logging
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from .data import (AIRQUALITY_SCHEMA, AIRQUALITY_TARGETS, ColumnKind, DEFAULT_LOOKBACK,
    DEFAULT_TRAIN_FRACTION, ImputePolicy, MinMaxColumnScaler, Schema, WindowedDataset,
    dataset_hash, frame_to_window, load_csv, load_or_build_cached, prepare_dataset)
from .evaluation import (MIN_JOINT_ROWS, EvalResult, compare_systems, evaluate,
    forecast_traces, mse_bars, write_plot_csvs)
from .experiments import ADVERSARIAL, SYSTEMS, build_trainer, run_seed_sweep, summarize_sweep
from .models import load_checkpoint, save_checkpoint
from ._abstract import TrainConfig, predict_models
from .synth import generate, optimal_mse_floor, parse_synth_arg, synth_columns, synth_schema, write_csv
from .utils.config import Config
from .utils.exceptions import (ConfigError, DimensionError, DivergenceError,
    EncodingError, InputError, SchemaError)
from .utils.utils import resolve_seed

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3
AIRQUALITY = 'airquality'
PROFILES = {
    AIRQUALITY: dict(lookback=24, layers=3, units=10, schema=AIRQUALITY),
    'industrial': dict(lookback=96, layers=1, units=100),
    }
PREDICTION_FORMAT = '%.17g'
DEFAULT_SYNTH = 'd=3'
OUT_DEFAULTS = dict(train='./runs/latest', compare='./runs/comparison',
    synth='./runs/synth', sweep='./runs/sweep')


class RunConfig(Config):
    """everything one command needs; `config.json` in a run directory is
    this object and re-runs the command"""
    DEFAULTS = dict(
        command='train',
        system=ADVERSARIAL,
        data=None,
        synth=None,
        schema=None,
        targets=None,
        profile=None,
        lookback=DEFAULT_LOOKBACK,
        layers=1,
        units=16,
        disc_hidden_sizes=None,
        train_fraction=DEFAULT_TRAIN_FRACTION,
        impute_policy=ImputePolicy.DROP_LEADING.value,
        out='./runs/latest',
        cache_dir=None,
        runs=None,
        checkpoint=None,
        seeds=None,
        systems=None,
        **{k: v for k, v in TrainConfig.DEFAULTS.items() if k != 'seed'},
        seed=None,
        )

    def __init__(self, d: Optional[Dict]=None, **kwargs):
        super(RunConfig, self).__init__(dict(self.DEFAULTS))
        self.update(d, **kwargs)

    @classmethod
    def resolve(cls, flags: Dict[str, Any]) -> 'RunConfig':
        """defaults < profile < --config file < flags; the seed falls back to
        MATSF_SEED and then 0"""
        flags = {k: v for k, v in flags.items() if v is not None}
        file_values = Config.from_json(flags.pop('config')).to_dict() if 'config' in flags else {}
        profile = flags.get('profile', file_values.get('profile'))
        cfg = cls()
        if profile is not None:
            if profile not in PROFILES:
                raise ConfigError(f"unknown profile {profile!r}; takes {sorted(PROFILES)}")
            cfg.update(PROFILES[profile])
        cfg.update(file_values)
        cfg.update(flags)
        if 'out' not in flags and 'out' not in file_values:
            cfg.out = OUT_DEFAULTS.get(cfg.command, cfg.out)
        cfg.seed = resolve_seed(cfg.seed)
        return cfg

    @property
    def hidden_sizes(self) -> List[int]:
        return [int(self.units)] * int(self.layers)

    def train_config(self) -> TrainConfig:
        return TrainConfig({k: getattr(self, k) for k in TrainConfig.FIELDS})

    def validate(self) -> 'RunConfig':
        if self.command in ('train', 'sweep') and self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; takes {list(SYSTEMS)}")
        if self.command == 'train' and (self.data is None) == (self.synth is None):
            raise ConfigError("train takes exactly one of --data and --synth")
        for name in ('lookback', 'layers', 'units'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        self.train_config().validate()
        return self


def exit_codes(fn: Callable[[RunConfig], int]) -> Callable[[RunConfig], int]:
    """map the package's errors onto the documented exit codes with a
    one-line diagnostic on stderr"""
    @functools.wraps(fn)
    def wrapper(config: RunConfig) -> int:
        try:
            return fn(config)
        except ConfigError as e:
            code, err = EXIT_CONFIG, e
        except (InputError, SchemaError, EncodingError, DimensionError) as e:
            code, err = EXIT_DATA, e
        except DivergenceError as e:
            code, err = EXIT_DIVERGENCE, e
        logger.error(f"{fn.__name__} failed ({type(err).__name__}): {err}")
        print(f"error: {err}", file=sys.stderr)
        return code
    return wrapper


#############
### train ###
#############

def _resolve_schema(config: RunConfig) -> Tuple[Schema, List[str]]:
    if config.schema in (None, AIRQUALITY):
        schema = AIRQUALITY_SCHEMA
        default_targets = AIRQUALITY_TARGETS
    else:
        schema = Schema.from_json(config.schema)
        default_targets = [c for c, k in schema.columns.items() if k != ColumnKind.CATEGORICAL]
    targets = config.targets
    if isinstance(targets, str):
        targets = [t.strip() for t in targets.split(',') if t.strip()]
    return schema, list(targets or default_targets)


def load_run_dataset(config: RunConfig
    ) -> Tuple[WindowedDataset, WindowedDataset, Dict[str, Any]]:
    """(train, test, schema dict) from a CSV or a synthetic spec"""
    lookback, fraction = int(config.lookback), float(config.train_fraction)
    if config.synth is not None:
        spec = parse_synth_arg(config.synth)
        columns = synth_columns(spec.d)
        options = dict(lookback=lookback, target_columns=columns, train_fraction=fraction)
        train, test = prepare_dataset(generate(spec), lookback, columns, fraction,
            dataset_hash=dataset_hash(spec.to_dict(), options))
        return train, test, synth_schema(spec.d).to_dict()
    schema, targets = _resolve_schema(config)
    options = dict(lookback=lookback, target_columns=targets, train_fraction=fraction,
        horizon=1, impute_policy=config.impute_policy)
    train, test = load_or_build_cached(config.data, schema, options, config.cache_dir)
    return train, test, schema.to_dict()


def _predictions_frame(dataset: WindowedDataset, pred: np.ndarray, split_name: str) -> pd.DataFrame:
    values = dataset.scaler.inverse_columns(pred, dataset.target_columns)
    frame = pd.DataFrame(values, columns=dataset.target_columns)
    frame.insert(0, 'target_row', dataset.target_rows)
    frame.insert(0, 'split', split_name)
    return frame


@exit_codes
def cmd_train(config: RunConfig) -> int:
    config.validate()
    train, test, schema = load_run_dataset(config)
    if len(test) < MIN_JOINT_ROWS:
        raise InputError(f"test split has {len(test)} windows, evaluation needs at least "
            f"{MIN_JOINT_ROWS}; use a longer series or a shorter lookback")
    cfg = config.train_config()
    trainer = build_trainer(config.system, train.n_features, train.n_variables,
        config.hidden_sizes, cfg, config.disc_hidden_sizes)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    out.joinpath('config.json').write_text(json.dumps(config.to_dict(), sort_keys=True, indent=2))
    out.joinpath('dataset.json').write_text(json.dumps(dict(
        dataset_hash=train.dataset_hash, n_train=len(train), n_test=len(test),
        target_columns=train.target_columns, feature_columns=train.feature_columns),
        sort_keys=True, indent=2))
    logger.info(f"training {config.system} on {len(train)} windows, testing on {len(test)}")
    try:
        report = trainer.fit(train, test)
    except DivergenceError as e:
        if e.report is not None:
            e.report.write(out)
        raise
    report.write(out)

    result = evaluate(trainer, test)
    result.write(out.joinpath('eval.json'))
    train_pred, test_pred = trainer.predict(train.windows), trainer.predict(test.windows)
    traces = pd.concat([forecast_traces(train, train_pred, 'train'),
        forecast_traces(test, test_pred, 'test')], ignore_index=True)
    write_plot_csvs(out, report.loss_frame(), traces, [result])
    pd.concat([_predictions_frame(train, train_pred, 'train'),
        _predictions_frame(test, test_pred, 'test')], ignore_index=True).to_csv(
        out.joinpath('predictions.csv'), index=False, float_format=PREDICTION_FORMAT)
    save_checkpoint(out.joinpath('checkpoint.ckpt'), trainer.models, trainer.discriminator,
        meta=dict(system=config.system, dataset=train.metadata(), schema=schema,
            train=cfg.to_dict()))

    print(f"{config.system}: {len(report.epochs)} epochs, test MSE "
        + ', '.join(f'{v}={m:.6g}' for v, m in zip(result.variables, result.mse))
        + f", joint gap {result.joint_gap:.4f}")
    return EXIT_OK


###############
### compare ###
###############

@exit_codes
def cmd_compare(config: RunConfig) -> int:
    runs = list(config.runs or [])
    if len(runs) < 2:
        raise ConfigError(f"compare needs at least 2 run directories, got {len(runs)}")
    pairs = []
    for run in runs:
        path = Path(run).joinpath('eval.json')
        if not path.exists():
            raise InputError(f"{run} has no eval.json; is it a finished train run?")
        pairs.append((Path(run).name, EvalResult.read(path)))
    hashes = {r.dataset_hash for _, r in pairs}
    if len(hashes) > 1:
        raise InputError(f"runs were trained on different datasets: {sorted(map(str, hashes))}")
    comparison = compare_systems(pairs)
    out = comparison.write(config.out)
    mse_bars([r for _, r in pairs]).to_csv(out.joinpath('mse_bars.csv'), index=False,
        float_format='%.12g')
    print(comparison.to_text(), end='')
    return EXIT_OK


################
### forecast ###
################

@exit_codes
def cmd_forecast(config: RunConfig) -> int:
    if config.checkpoint is None or config.data is None:
        raise ConfigError("forecast needs --checkpoint and --data")
    ckpt = load_checkpoint(config.checkpoint)
    meta = ckpt['meta']['dataset']
    if config.schema is None:
        schema = Schema.from_dict(ckpt['meta']['schema'])
    elif config.schema == AIRQUALITY:
        schema = AIRQUALITY_SCHEMA
    else:
        schema = Schema.from_json(config.schema)
    window = frame_to_window(load_csv(config.data, schema), meta)
    pred = predict_models(ckpt['forecasters'], window)
    scaler = MinMaxColumnScaler.from_dict(meta['scaler'])
    values = scaler.inverse_columns(pred, meta['target_columns'])[0]
    for col, value in zip(meta['target_columns'], values):
        print(f"{col} {value:.17g}")
    return EXIT_OK


###########################
### synth / seed sweeps ###
###########################

@exit_codes
def cmd_synth(config: RunConfig) -> int:
    spec = parse_synth_arg(config.synth or DEFAULT_SYNTH)
    out = Path(config.out)
    csv = write_csv(generate(spec), out.joinpath('synth.csv'))
    out.joinpath('schema.json').write_text(json.dumps(synth_schema(spec.d).to_dict(), indent=2))
    out.joinpath('synth_spec.json').write_text(json.dumps(spec.to_dict(), indent=2))
    print(f"wrote {spec.length} rows x {spec.d} variables to {csv}")
    return EXIT_OK


def _seeds(value: Any) -> List[int]:
    if value is None:
        return list(range(5))
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
        if len(value) == 1:
            return list(range(int(value[0])))
    return [int(v) for v in value]


@exit_codes
def cmd_sweep(config: RunConfig) -> int:
    config.validate()
    spec = parse_synth_arg(config.synth or DEFAULT_SYNTH)
    systems = config.systems or [ADVERSARIAL, 'parallel']
    if isinstance(systems, str):
        systems = [s.strip() for s in systems.split(',')]
    for s in systems:
        if s not in SYSTEMS:
            raise ConfigError(f"unknown system {s!r}; takes {list(SYSTEMS)}")
    train = config.train_config().to_dict()
    train.pop('seed')
    frame = run_seed_sweep(spec, _seeds(config.seeds),
        dict(lookback=int(config.lookback), hidden_sizes=config.hidden_sizes,
            disc_hidden_sizes=config.disc_hidden_sizes,
            train_fraction=float(config.train_fraction), train=train),
        systems, max_workers=int(config.max_workers))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out.joinpath('sweep.csv'), index=False, float_format='%.12g')
    summary = summarize_sweep(frame, optimal_mse_floor(spec))
    out.joinpath('sweep_summary.json').write_text(json.dumps(summary, sort_keys=True, indent=2))
    for name, verdict in summary['verdicts'].items():
        passed = verdict.get('passed') if 'passed' in verdict else \
            all(v['passed'] for v in verdict.values())
        print(f"{name}: {'pass' if passed else 'FAIL'}")
    return EXIT_OK


COMMANDS = dict(train=cmd_train, compare=cmd_compare, forecast=cmd_forecast,
    synth=cmd_synth, sweep=cmd_sweep)


##############
### parser ###
##############

def _csv_ints(value: str) -> List[int]:
    return [int(v) for v in value.split(',') if v.strip()]


def _add_model_args(p: ArgumentParser):
    p.add_argument("--profile", type=str, choices=sorted(PROFILES))
    p.add_argument("--lookback", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--units", type=int)
    p.add_argument("--disc-hidden", dest='disc_hidden_sizes', type=_csv_ints)
    p.add_argument("--train-fraction", type=float)


def _add_train_args(p: ArgumentParser):
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-forecast", type=float)
    p.add_argument("--lr-disc", type=float)
    p.add_argument("--lr-gen", type=float)
    p.add_argument("--optimizer", type=str, choices=['sgd', 'adam'])
    p.add_argument("--lambda-adv", type=float)
    p.add_argument("--disc-steps", dest='disc_steps_per_batch', type=int)
    p.add_argument("--gen-steps", dest='gen_steps_per_batch', type=int)
    p.add_argument("--generator-loss", type=str, choices=['non_saturating', 'saturating'])
    p.add_argument("--workers", dest='max_workers', type=int)
    p.add_argument("-v", "--verbose", action='store_true', default=None)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='matsf',
        description="adversarially regularized multi-variable forecasting")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help="train one system and write a run directory")
    p.add_argument("-c", "--config", type=str, help="JSON file of RunConfig values")
    p.add_argument("-s", "--system", type=str, choices=list(SYSTEMS))
    p.add_argument("-d", "--data", type=str, help="CSV file")
    p.add_argument("--synth", type=str, help="'d=3,length=5000,...' or a JSON spec")
    p.add_argument("--schema", type=str, help="'airquality' or a schema JSON file")
    p.add_argument("--targets", type=str, help="comma-separated target columns")
    p.add_argument("--cache-dir", type=str)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", type=str)
    _add_model_args(p)
    _add_train_args(p)

    p = sub.add_parser('compare', help="compare finished runs on one dataset")
    p.add_argument("runs", nargs='*')
    p.add_argument("-c", "--config", type=str)
    p.add_argument("-o", "--out", type=str)

    p = sub.add_parser('forecast', help="next-step forecast from a checkpoint")
    p.add_argument("-k", "--checkpoint", type=str)
    p.add_argument("-d", "--data", type=str, help="CSV holding at least lookback rows")
    p.add_argument("--schema", type=str)

    p = sub.add_parser('synth', help="write a synthetic coupled series")
    p.add_argument("--synth", type=str, help="default 'd=3'")
    p.add_argument("-o", "--out", type=str)

    p = sub.add_parser('sweep', help="multi-seed comparison on synthetic data")
    p.add_argument("-c", "--config", type=str)
    p.add_argument("--synth", type=str, help="default 'd=3'")
    p.add_argument("--seeds", type=str, help="count, or comma-separated seeds")
    p.add_argument("--systems", type=str, help="comma-separated systems")
    p.add_argument("-o", "--out", type=str)
    _add_model_args(p)
    _add_train_args(p)
    return parser


def main(argv: Optional[Sequence[str]]=None) -> int:
    args: Namespace = build_parser().parse_args(argv)
    try:
        config = RunConfig.resolve(vars(args))
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[config.command](config)


if __name__ == '__main__':
    sys.exit(main())
