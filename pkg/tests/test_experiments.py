import numpy as np
import pandas as pd
import pytest
from matsf.baselines import MultiOutputTrainer, ParallelTrainer
from matsf.experiments import (DISC_ACC_BAND, MSE_TOLERANCE, build_trainer, run_seed_sweep,
    summarize_sweep, synthetic_splits)
from matsf.synth import coupled_spec, optimal_mse_floor
from matsf.trainer import AdversarialTrainer, TrainConfig
from matsf.utils.exceptions import ConfigError

SMALL = dict(lookback=4, hidden_sizes=[3], disc_hidden_sizes=[4],
    train=dict(epochs=1, batch_size=32))


def row(seed, system, mse, gap, disc_acc=None, initial=(20.0, 20.0), status='completed'):
    return dict(seed=seed, system=system, mse_x0=mse[0], mse_x1=mse[1],
        initial_mse_x0=initial[0], initial_mse_x1=initial[1],
        mse_mean=float(np.mean(mse)), joint_gap=gap, disc_acc=disc_acc, status=status)


@pytest.mark.parametrize("system, kind", [
    ('adversarial', AdversarialTrainer),
    ('parallel', ParallelTrainer),
    ('multi_output', MultiOutputTrainer),
    ])
def test_build_trainer(system, kind):
    trainer = build_trainer(system, 3, 2, [4], TrainConfig(seed=1))
    assert isinstance(trainer, kind)
    assert trainer.system == system


def test_unknown_system():
    with pytest.raises(ConfigError):
        build_trainer('arima', 3, 2, [4], TrainConfig())


def test_synthetic_splits_share_a_hash():
    train, test = synthetic_splits(coupled_spec(d=2, length=100), lookback=4)
    assert train.dataset_hash == test.dataset_hash is not None
    assert train.target_columns == ['x0', 'x1']
    assert len(train) + len(test) == 96


def test_sweep_rows_are_ordered_and_repeatable():
    spec = coupled_spec(d=2, length=120)
    serial = run_seed_sweep(spec, [1, 0], SMALL)
    threaded = run_seed_sweep(spec, [1, 0], SMALL, max_workers=4)
    assert serial[['seed', 'system']].values.tolist() == [[0, 'adversarial'],
        [0, 'parallel'], [1, 'adversarial'], [1, 'parallel']]
    pd.testing.assert_frame_equal(serial, threaded)
    assert serial['status'].eq('completed').all()
    assert serial.loc[serial['system'] == 'parallel', 'disc_acc'].isna().all()


def test_diverged_runs_are_counted():
    spec = coupled_spec(d=2, length=120)
    cfg = dict(SMALL, train=dict(epochs=1, batch_size=32, divergence_threshold=1e-12))
    frame = run_seed_sweep(spec, [0], cfg)
    assert frame['status'].eq('diverged').all()
    summary = summarize_sweep(frame)
    assert summary['diverged'] == 2
    assert summary['verdicts'] == {}


def test_verdicts_pass():
    frame = pd.DataFrame([
        row(0, 'adversarial', (1.0, 1.0), 0.1, disc_acc=0.5),
        row(1, 'adversarial', (1.1, 0.9), 0.2, disc_acc=0.6),
        row(0, 'parallel', (1.0, 1.0), 0.4),
        row(1, 'parallel', (1.0, 1.0), 0.5),
        ])
    summary = summarize_sweep(frame, floor=0.6)
    v = summary['verdicts']
    assert summary['variables'] == ['x0', 'x1']
    assert v['joint_gap'] == dict(adversarial=pytest.approx(0.15), parallel=pytest.approx(0.45),
        passed=True)
    assert v['mse_parity']['passed'] and v['mse_parity']['tolerance'] == MSE_TOLERANCE
    assert v['equilibrium']['passed'] and v['equilibrium']['band'] == list(DISC_ACC_BAND)
    assert v['learning']['adversarial']['passed']


def test_verdicts_fail_but_keep_the_numbers():
    frame = pd.DataFrame([
        row(0, 'adversarial', (2.0, 1.0), 0.9, disc_acc=0.95, initial=(5.0, 5.0)),
        row(0, 'parallel', (1.0, 1.0), 0.4),
        ])
    v = summarize_sweep(frame, floor=[0.1, 0.1])['verdicts']
    assert not v['joint_gap']['passed'] and v['joint_gap']['adversarial'] == 0.9
    assert not v['mse_parity']['passed'] and v['mse_parity']['ratios']['x0'] == 2.0
    assert not v['equilibrium']['passed'] and v['equilibrium']['disc_acc'] == [0.95]
    assert not v['learning']['parallel']['passed']


def test_diverged_rows_are_left_out_of_the_medians():
    frame = pd.DataFrame([
        row(0, 'adversarial', (1.0, 1.0), 0.1, disc_acc=0.5),
        row(1, 'adversarial', (100.0, 100.0), 5.0, disc_acc=0.5, status='diverged'),
        row(0, 'parallel', (1.0, 1.0), 0.4),
        ])
    summary = summarize_sweep(frame)
    assert summary['medians']['adversarial']['mse_x0'] == 1.0
    assert summary['diverged'] == 1
    assert 'learning' not in summary['verdicts']


@pytest.mark.slow
def test_desk_scale_learning():
    spec = coupled_spec(d=3, length=5000, seed=0)
    frame = run_seed_sweep(spec, [0], dict(train=dict(epochs=30)),
        systems=('adversarial', 'parallel', 'multi_output'), max_workers=3)
    summary = summarize_sweep(frame, floor=optimal_mse_floor(spec))
    for system, verdict in summary['verdicts']['learning'].items():
        assert verdict['passed'], (system, verdict)


@pytest.mark.slow
def test_desk_scale_regularization_effect():
    spec = coupled_spec(d=3, coupling=0.45, self_weight=0.45, length=5000, seed=0)
    frame = run_seed_sweep(spec, range(5), dict(train=dict(epochs=30)), max_workers=4)
    v = summarize_sweep(frame)['verdicts']
    assert v['joint_gap']['passed'], v['joint_gap']
    assert v['mse_parity']['passed'], v['mse_parity']
    assert v['equilibrium']['passed'], v['equilibrium']
