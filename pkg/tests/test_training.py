import dataclasses

import numpy as np
import pytest

from so3fm.network import Regressor
from so3fm.synthetic import gen_synthetic_dataset
from so3fm.training import (
    SCHEMA,
    Optimizer,
    TrainConfig,
    TrainingDiverged,
    calibrate_tau,
    evaluate,
    make_splits,
    pretrain,
    report_from_predictions,
    run,
    ssl_train,
)
from so3fm.fisher import FisherParams

SMALL = dict(n_labeled=30, n_unlabeled=60, n_test=40, hidden=16, pretrain_steps=60, pretrain_batch=8,
             batch_labeled=8, batch_unlabeled=16, ssl_steps=30, snapshot_every=10, seed=2)


def small(**over):
    return TrainConfig(**{**SMALL, **over})


@pytest.fixture(scope="module")
def setup():
    cfg = small()
    splits = make_splits(cfg)
    pre, losses = pretrain(cfg, splits.labeled)
    return cfg, splits, pre, losses


class TestConfig:
    def test_round_trip(self):
        cfg = small()
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_rejects_unknown_and_missing_schema(self):
        with pytest.raises(ValueError, match="unknown config keys: bogus"):
            TrainConfig.from_dict({"schema": SCHEMA, "bogus": 1})
        with pytest.raises(ValueError, match="schema"):
            TrainConfig.from_dict({"seed": 1})
        with pytest.raises(ValueError):
            TrainConfig(schema="other/9")

    @pytest.mark.parametrize("bad", [dict(batch_labeled=0), dict(ema_decay=1.5), dict(mode="x"),
                                     dict(head="x"), dict(optimizer="x"), dict(unsup_loss="x"), dict(unlabeled_denominator="x"),
                                     dict(tau=None, tau_coverage=None)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            small(**bad)


def test_splits_disjoint():
    cfg = small()
    sp = make_splits(cfg)
    a = {tuple(np.round(r.ravel(), 12)) for r in sp.labeled.labels}
    b = {tuple(np.round(r.ravel(), 12)) for r in sp.unlabeled.labels}
    assert not a & b
    assert len(sp.labeled) == 30 and len(sp.unlabeled) == 60 and len(sp.test) == 40


def test_optimizer_sgd_and_adam():
    p = [np.array([1.0, -2.0])]
    Optimizer("sgd", 0.5).step(p, [np.array([1.0, 1.0])])
    np.testing.assert_array_equal(p[0], [0.5, -2.5])
    q = [np.array([1.0])]
    Optimizer("adam", 0.1).step(q, [np.array([3.0])])
    np.testing.assert_allclose(q[0], [0.9], atol=1e-7)  # first Adam step has size lr


class TestPretrain:
    def test_deterministic(self, setup):
        cfg, splits, pre, _ = setup
        again, _ = pretrain(cfg, splits.labeled)
        np.testing.assert_array_equal(again.flat(), pre.flat())

    def test_smoothed_loss_decreases(self):
        cfg = small(pretrain_steps=1000, n_labeled=200)
        _, losses = pretrain(cfg, make_splits(cfg).labeled)
        smooth = np.convolve(losses, np.ones(100) / 100, mode="valid")
        assert np.all(np.diff(smooth[::100]) < 0)

    def test_noiseless_task_is_learnable(self):
        cfg = TrainConfig(data_noise=0.0, pretrain_steps=4000, hidden=64, n_unlabeled=10, n_test=200)
        splits = make_splits(cfg)
        model, _ = pretrain(cfg, splits.labeled)
        assert evaluate(model, splits.test, cfg).median_error_deg < 5.0

    def test_empty(self, setup):
        cfg, splits, _, _ = setup
        with pytest.raises(ValueError):
            pretrain(cfg, splits.labeled.subset(np.arange(0)))

    def test_divergence_reported(self, setup):
        cfg, splits, _, _ = setup
        with pytest.raises(TrainingDiverged):
            pretrain(dataclasses.replace(cfg, lr=1e4, optimizer="sgd"), splits.labeled)


class TestEvaluate:
    def test_constant_guess(self):
        test = gen_synthetic_dataset(4000, seed=11)
        reg = Regressor.init(16, 8, 9, np.random.default_rng(0))
        for p in reg.params:
            p[...] = 0
        reg.params[-1][...] = 5 * np.eye(3).ravel()
        rep = evaluate(reg, test)
        # E[angle] of a Haar rotation is pi/2 + 2/pi radians
        assert abs(rep.mean_error_deg - np.degrees(np.pi / 2 + 2 / np.pi)) < 2.0
        assert 0 <= rep.acc_30deg < 0.1

    def test_perfect_predictions(self):
        test = gen_synthetic_dataset(50, seed=12)
        rep = report_from_predictions(FisherParams(50 * test.labels), test.labels)
        assert rep.mean_error_deg < 1e-5 and rep.acc_30deg == 1.0

    def test_empty(self, setup):
        _, splits, pre, _ = setup
        with pytest.raises(ValueError):
            evaluate(pre, splits.test.subset(np.arange(0)))


class TestSSL:
    def test_lambda_zero_matches_supervised_bitwise(self, setup):
        cfg, splits, pre, _ = setup
        a = ssl_train(dataclasses.replace(cfg, lambda_u=0.0), splits, pre, tau=np.inf)
        b = ssl_train(cfg, splits, pre, tau=np.inf, use_unlabeled=False)
        np.testing.assert_array_equal(a.student.flat(), b.student.flat())
        assert a.history == b.history

    def test_tau_minus_inf_gates_everything(self, setup):
        cfg, splits, pre, _ = setup
        r = ssl_train(cfg, splits, pre, tau=-np.inf)
        assert not r.step_log.passed.any()
        assert np.all(r.step_log.grad_norm == 0)
        b = ssl_train(cfg, splits, pre, tau=-np.inf, use_unlabeled=False)
        np.testing.assert_array_equal(r.student.flat(), b.student.flat())

    def test_teacher_only_moves_by_ema(self, setup):
        cfg, splits, pre, _ = setup
        r = ssl_train(dataclasses.replace(cfg, ema_decay=1.0), splits, pre, tau=np.inf)
        np.testing.assert_array_equal(r.teacher.flat(), pre.flat())
        assert not np.array_equal(r.student.flat(), pre.flat())

    def test_pretrained_model_untouched(self, setup):
        cfg, splits, pre, _ = setup
        before = pre.flat()
        ssl_train(cfg, splits, pre, tau=np.inf)
        np.testing.assert_array_equal(pre.flat(), before)

    def test_asymmetric_noise(self, setup):
        cfg, splits, pre, _ = setup
        r = ssl_train(cfg, splits, pre, tau=np.inf, record_noise=True)
        assert np.all(r.step_log.teacher_noise != r.step_log.student_noise)
        assert r.step_log.student_noise.mean() > r.step_log.teacher_noise.mean()

    def test_filter_soundness(self, setup):
        cfg, splits, pre, _ = setup
        tau = calibrate_tau(pre, splits.unlabeled, cfg, 0.4)
        r = ssl_train(cfg, splits, pre, tau=tau)
        active = r.step_log.grad_norm > 0
        assert active.any()
        assert np.all(r.step_log.entropy[active] <= tau)
        np.testing.assert_array_equal(active, r.step_log.passed)

    def test_calibrated_coverage(self, setup):
        cfg, splits, pre, _ = setup
        tau = calibrate_tau(pre, splits.unlabeled, cfg, 0.4)
        r = ssl_train(dataclasses.replace(cfg, ssl_steps=1), splits, pre, tau=tau)
        assert abs(r.history[0]["coverage"] - 0.4) < 0.1

    def test_history_schedule(self, setup):
        cfg, splits, pre, _ = setup
        r = ssl_train(cfg, splits, pre, tau=np.inf)
        assert [h["step"] for h in r.history] == [0, 10, 20, 30]

    def test_deterministic_run(self):
        a, b = run(small()), run(small())
        assert a.report == b.report
        np.testing.assert_array_equal(a.ssl.student.flat(), b.ssl.student.flat())

    def test_bingham_head(self):
        r = run(small(head="bingham"))
        assert r.ssl.student.n_out == 7
        assert np.isfinite(r.report.mean_error_deg)
        assert r.report.pseudo_label_coverage_history[0] == pytest.approx(0.4, abs=0.15)
