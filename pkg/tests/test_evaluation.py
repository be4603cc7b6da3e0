import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from matsf.data import MinMaxColumnScaler
from matsf.evaluation import (EvalResult, TIE, compare_systems, correlation_matrix,
    discriminator_accuracy, evaluate, forecast_traces, joint_consistency, mae_per_variable,
    mse_bars, mse_per_variable, write_plot_csvs)
from matsf.models import build_discriminator, build_forecasters
from matsf.trainer import AdversarialTrainer
from matsf.utils.exceptions import ContractError, DimensionError


def result(system, mse, gap=0.1, variables=('a', 'b')):
    d = len(variables)
    return EvalResult(system, variables, mse, mse, mse, np.eye(d), np.eye(d), gap)


class Oracle:
    """a system that predicts a fixed array"""
    system = 'oracle'
    discriminator = None

    def __init__(self, predictions):
        self.predictions = predictions

    def predict(self, windows):
        return self.predictions


###############
### metrics ###
###############

def test_perfect_forecast():
    truth = np.arange(12.0).reshape(6, 2)
    assert_array_equal(mse_per_variable(truth, truth), [0.0, 0.0])
    assert_array_equal(mae_per_variable(truth, truth), [0.0, 0.0])


def test_constant_offset():
    truth = np.zeros((5, 3))
    pred = truth + np.array([1.0, -2.0, 0.5])
    assert_allclose(mse_per_variable(pred, truth), [1.0, 4.0, 0.25])
    assert_allclose(mae_per_variable(pred, truth), [1.0, 2.0, 0.5])


def test_metrics_in_original_units():
    data = pd.DataFrame(dict(a=[0.0, 10.0], b=[0.0, 2.0]))
    scaler = MinMaxColumnScaler.fit(data, ['a', 'b'])
    truth = np.zeros((4, 2))
    pred = np.full((4, 2), 0.5)
    assert_allclose(mse_per_variable(pred, truth, scaler, ['a', 'b']), [25.0, 1.0])
    assert_allclose(mse_per_variable(pred, truth), [0.25, 0.25])
    with pytest.raises(ContractError):
        mse_per_variable(pred, truth, scaler)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        mse_per_variable(np.zeros((4, 2)), np.zeros((4, 3)))
    with pytest.raises(DimensionError):
        mse_per_variable(np.zeros(4), np.zeros(4))


def test_joint_consistency_of_a_perfect_forecast(rng):
    truth = rng.normal(size=(50, 3))
    joint = joint_consistency(truth, truth)
    assert joint.gap == 0.0
    assert_array_equal(np.diag(joint.c_pred), np.ones(3))


def test_joint_gap_of_a_decorrelated_forecast(rng):
    x = rng.normal(size=500)
    truth = np.stack([x, x + 0.01 * rng.normal(size=500)], axis=1)
    pred = rng.normal(size=(500, 2))
    joint = joint_consistency(pred, truth)
    assert joint.c_true[0, 1] > 0.99
    # only the two off-diagonal entries differ
    assert_allclose(joint.gap, np.sqrt(2) * abs(joint.c_true[0, 1] - joint.c_pred[0, 1]))


def test_joint_consistency_needs_three_rows():
    with pytest.raises(ContractError):
        joint_consistency(np.zeros((2, 2)), np.zeros((2, 2)))


def test_constant_column_is_flagged():
    C, degenerate = correlation_matrix(np.array([[1.0, 2.0], [1.0, 3.0], [1.0, 5.0]]))
    assert degenerate == [0]
    assert_array_equal(C, np.eye(2))


def test_discriminator_accuracy():
    assert discriminator_accuracy(np.array([0.9, 0.8]), np.array([0.1, 0.2])) == 1.0
    assert discriminator_accuracy(np.array([0.1, 0.2]), np.array([0.9, 0.8])) == 0.0
    assert discriminator_accuracy(np.full(4, 0.5), np.full(4, 0.5)) == 0.5
    with pytest.raises(ContractError):
        discriminator_accuracy(np.zeros(0), np.zeros(0))


################
### evaluate ###
################

def test_evaluate_oracle(windowed):
    data = windowed(n=12)
    res = evaluate(Oracle(data.targets), data)
    assert res.system == 'oracle'
    assert res.mse == [0.0, 0.0] and res.mse_scaled == [0.0, 0.0]
    assert res.joint_gap == 0.0
    assert res.disc_acc is None


def test_evaluate_adversarial_system(windowed, tmp_path):
    data = windowed(n=12)
    trainer = AdversarialTrainer(build_forecasters(2, [3], 2, seed=0),
        build_discriminator(2, seed=0))
    res = evaluate(trainer, data)
    assert res.system == 'adversarial'
    assert 0.0 <= res.disc_acc <= 1.0
    assert len(res.mse) == 2
    again = EvalResult.read(res.write(tmp_path / 'eval.json'))
    assert again.to_dict() == res.to_dict()


def test_precomputed_predictions_win(windowed):
    data = windowed(n=12)
    res = evaluate(Oracle(np.zeros((12, 2))), data, predictions=data.targets + 1.0)
    assert_allclose(res.mse, [1.0, 1.0])


##################
### comparison ###
##################

def test_winner_per_variable():
    comp = compare_systems([result('adversarial', [1.0, 3.0]), result('parallel', [2.0, 2.0])])
    assert comp.winners() == dict(a='adversarial', b='parallel')
    assert comp.joint_gap.to_dict() == dict(adversarial=0.1, parallel=0.1)


def test_equal_mse_is_a_tie():
    comp = compare_systems([result('adversarial', [1.0, 2.0]), result('parallel', [1.0, 3.0])])
    assert comp.winners()['a'] == TIE
    assert comp.winners()['b'] == 'adversarial'


def test_single_system_has_no_winner():
    comp = compare_systems([result('parallel', [1.0, 2.0])])
    assert comp.winners() == dict(a=None, b=None)


def test_comparison_contracts():
    with pytest.raises(ContractError):
        compare_systems([])
    with pytest.raises(ContractError):
        compare_systems([result('x', [1.0, 2.0]), result('y', [1.0], variables=('a',))])


def test_relabelled_and_duplicate_systems(tmp_path):
    comp = compare_systems([('run1', result('parallel', [1.0, 2.0])),
        ('run1', result('parallel', [2.0, 1.0]))])
    assert list(comp.mse.columns) == ['run1_0', 'run1_1', 'winner']
    comp.write(tmp_path)
    table = pd.read_csv(tmp_path / 'comparison.csv', index_col='variable')
    assert table.loc['a', 'winner'] == 'run1_0'
    assert 'joint_gap' in comp.to_text()


#################
### plot data ###
#################

def test_plot_csvs(windowed, tmp_path):
    data = windowed(n=10)
    traces = forecast_traces(data, data.targets, 'test')
    assert list(traces.columns) == ['split', 'timestamp', 'v0_true', 'v0_pred',
        'v1_true', 'v1_pred']
    results = [result('adversarial', [1.0, 2.0], variables=('v0', 'v1'))]
    bars = mse_bars(results)
    assert bars[['system', 'variable']].values.tolist() == [['adversarial', 'v0'],
        ['adversarial', 'v1']]
    loss = pd.DataFrame(dict(epoch=[0, 1], forecast_loss_v0=[0.5, 0.25]))
    write_plot_csvs(tmp_path, loss, traces, results)
    for name in ('loss_curves.csv', 'forecast_traces.csv', 'mse_bars.csv'):
        assert tmp_path.joinpath(name).exists()
    assert len(pd.read_csv(tmp_path / 'forecast_traces.csv')) == 10


def test_mse_matches_scalar_loop(rng):
    pred, truth = rng.normal(size=(17, 4)), rng.normal(size=(17, 4))
    expected = []
    for k in range(4):
        s = 0.0
        for n in range(17):
            s += (pred[n, k] - truth[n, k]) ** 2
        expected.append(s / 17)
    assert_allclose(mse_per_variable(pred, truth), expected, rtol=0, atol=1e-12)


def test_metrics_ignore_row_order(rng):
    pred, truth = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    perm = rng.permutation(30)
    assert_allclose(mse_per_variable(pred[perm], truth[perm]), mse_per_variable(pred, truth))
    assert_allclose(joint_consistency(pred[perm], truth[perm]).gap,
        joint_consistency(pred, truth).gap, atol=1e-12)


def test_target_correlation_matches_the_process():
    from matsf.synth import coupled_spec, simulate, true_cross_correlation
    spec = coupled_spec(d=3, coupling=0.4, length=20_000, seed=2)
    x = simulate(spec)
    joint = joint_consistency(x, x)
    assert np.max(np.abs(joint.c_true - true_cross_correlation(spec))) < 0.05
