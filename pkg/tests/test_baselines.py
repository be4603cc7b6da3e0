import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from matsf.baselines import (BaselineKind, MultiOutputTrainer, ParallelTrainer,
    train_multi_output, train_parallel_single)
from matsf.models import build_discriminator, build_forecasters
from matsf.trainer import TrainConfig, train
from matsf.utils.exceptions import ConfigError


def cfg(**kwargs):
    return TrainConfig(dict(dict(epochs=3, batch_size=8, seed=1), **kwargs))


def test_kinds_are_exhaustive():
    assert {k.value for k in BaselineKind} == {'multi_output', 'parallel'}


def test_single_variable_multi_output_is_a_single_forecaster(windowed):
    data = windowed(d=1)
    multi = build_forecasters(1, [4], 1, seed=2, multi_output=True)
    single = build_forecasters(1, [4], 1, seed=2)
    r_multi = train_multi_output(multi[0], data, cfg())
    r_single = train_parallel_single(single, data, cfg())
    assert_allclose(r_multi.forecast_loss_curve(0), r_single.forecast_loss_curve(0),
        rtol=1e-12, atol=0)
    assert_allclose(multi[0].head_W.values, single[0].head_W.values, rtol=1e-12, atol=1e-15)


def test_identical_targets_give_identical_losses(windowed):
    base = windowed(d=1)
    data = windowed(d=2, targets=np.repeat(base.targets, 2, axis=1))
    model = build_forecasters(2, [4], 2, seed=0, multi_output=True)[0]
    # symmetric head
    model.head_W.values[1] = model.head_W.values[0]
    model.head_b.values[1] = model.head_b.values[0]
    report = train_multi_output(model, data, cfg())
    assert_allclose(report.forecast_loss_curve('v0'), report.forecast_loss_curve('v1'),
        rtol=1e-12, atol=0)


def test_multi_output_reports_each_variable(windowed):
    data = windowed(d=3)
    model = build_forecasters(3, [5], 3, seed=0, multi_output=True)[0]
    trainer = MultiOutputTrainer(model, cfg())
    report = trainer.fit(data.subset(0, 20), data.subset(20, 24))
    assert report.system == 'multi_output'
    assert len(report.epochs[-1]['forecast_loss']) == 3
    assert trainer.predict(data.windows).shape == (24, 3)
    assert trainer.discriminator is None
    assert all(v is None for v in report.metric_curve('disc_loss'))


def test_parallel_equals_adversarial_without_regularization(windowed):
    data = windowed()
    parallel = build_forecasters(2, [4], 2, seed=5)
    adversarial = build_forecasters(2, [4], 2, seed=5)
    r_par = train_parallel_single(parallel, data, cfg(lambda_adv=0.0))
    r_adv = train(adversarial, build_discriminator(2, seed=5), data, cfg(lambda_adv=0.0))
    for v in ('v0', 'v1'):
        assert r_par.forecast_loss_curve(v) == r_adv.forecast_loss_curve(v)
    for a, b in zip(parallel, adversarial):
        assert_array_equal(a.head_W.values, b.head_W.values)


def test_parallel_models_are_independent(windowed):
    data = windowed(d=3)
    models = build_forecasters(3, [4], 3, seed=4)
    report = train_parallel_single(models, data, cfg())

    # same forecasters, variables listed in reverse
    order = [2, 1, 0]
    flipped = windowed(d=3, targets=data.targets[:, order])
    rebuilt = build_forecasters(3, [4], 3, seed=4)
    rev = ParallelTrainer([rebuilt[k] for k in order], cfg()).fit(flipped)
    for pos, k in enumerate(order):
        assert rev.forecast_loss_curve(pos) == report.forecast_loss_curve(k)


def test_variable_count_is_checked(windowed):
    data = windowed(d=2)
    with pytest.raises(ConfigError):
        train_parallel_single(build_forecasters(2, [3], 3, seed=0), data, cfg())
    with pytest.raises(ConfigError):
        train_multi_output(build_forecasters(2, [3], 3, seed=0, multi_output=True)[0],
            data, cfg())


def test_parallel_rejects_multi_output_models():
    with pytest.raises(ConfigError):
        ParallelTrainer(build_forecasters(2, [3], 2, seed=0, multi_output=True))
