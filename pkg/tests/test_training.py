from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssfr.dataio import FunctionalDataset
from ssfr.deep import DeepConfig
from ssfr.errors import InvalidArgumentError, TrainingFailure
from ssfr.grid import make_uniform_grid
from ssfr.model import build_model, model_to_bytes
from ssfr.simgen import SimConfig, generate
from ssfr.training import (
    Adam,
    _validation_rows,
    TrainConfig,
    default_learning_rate,
    evaluate_risk,
    functional_risk,
    grad_check,
    select_smoothing,
    train,
)


def toy(n=40, j=1, r=20, q=15, seed=0):
    rng = np.random.default_rng(seed)
    g, h = make_uniform_grid(0, 1, r), make_uniform_grid(0, 1, q)
    xs = tuple(rng.standard_normal((n, r)) for _ in range(j))
    return FunctionalDataset(xs, (g,) * j, rng.standard_normal((n, q)), h, tuple(f"x{i}" for i in range(j)))


def planted_noiseless(n=200, k=6, seed=1):
    theta = np.random.default_rng(0).standard_normal((k, k))
    ds, truth = generate(SimConfig(n=n, R=30, Q=30, surface="planted_theta", planted_theta=(theta,), seed=seed))
    return FunctionalDataset(ds.predictors, ds.predictor_grids, truth["noiseless"], ds.outcome_grid, ds.names)


class TestRisk:
    def test_unit_residual(self):
        g = make_uniform_grid(0, 1, 11)
        assert functional_risk(np.ones((3, 11)), np.zeros((3, 11)), g.quad_weights) == pytest.approx(1.0, abs=1e-14)

    def test_hand_value(self):
        # (1/2) * [(0.5*1 + 0.5*4) + (0.5*0 + 0.5*1)] = 1.5
        assert functional_risk([[1.0, 2.0], [0.0, 1.0]], np.zeros((2, 2)), [0.5, 0.5]) == pytest.approx(1.5)

    def test_zero_at_truth(self):
        y = np.random.default_rng(0).standard_normal((4, 6))
        assert functional_risk(y, y, np.ones(6)) == 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_scaling_and_permutation(self, seed):
        rng = np.random.default_rng(seed)
        y, mu = rng.standard_normal((2, 7, 5))
        xi = rng.uniform(0.1, 1.0, 5)
        base = functional_risk(y, mu, xi)
        assert functional_risk(y, mu, 2 * xi) == pytest.approx(2 * base, rel=1e-12)
        perm = rng.permutation(7)
        assert functional_risk(y[perm], mu[perm], xi) == pytest.approx(base, rel=1e-12)

    def test_shape_errors(self):
        with pytest.raises(InvalidArgumentError):
            functional_risk(np.zeros((2, 3)), np.zeros((2, 4)), np.ones(3))
        with pytest.raises(InvalidArgumentError):
            functional_risk(np.zeros((2, 3)), np.zeros((2, 3)), np.ones(4))

    def test_chunked_equals_direct(self):
        ds = toy()
        m = build_model(ds, 5, 4)
        m.structured.intercept_theta[:] = [0.3, -0.2, 0.1, 0.5]
        data = m.prepare(ds)
        direct = functional_risk(ds.outcome, m.predict(ds), ds.outcome_grid.quad_weights)
        for chunk in (1, 7, 1000):
            got = evaluate_risk(m, data, ds.outcome, ds.outcome_grid.quad_weights, chunk=chunk)
            assert got == pytest.approx(direct, rel=1e-12)


class TestAdam:
    def test_first_step(self):
        # bias correction makes the first step lr * g / (|g| + eps)
        p = {"w": np.array([1.0, -2.0, 0.0])}
        g = {"w": np.array([2.0, -0.5, 0.0])}
        Adam(lr=0.1).step(p, g)
        np.testing.assert_allclose(p["w"], [1.0 - 0.1 * 2 / (2 + 1e-8), -2.0 + 0.1 * 0.5 / (0.5 + 1e-8), 0.0])

    def test_two_steps_by_hand(self):
        b1, b2, lr, eps = 0.9, 0.999, 0.01, 1e-8
        p = {"w": np.array([0.0])}
        opt = Adam(lr, b1, b2, eps)
        m = v = 0.0
        w = 0.0
        for t, g in enumerate([1.0, 3.0], start=1):
            opt.step(p, {"w": np.array([g])})
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert p["w"][0] == pytest.approx(w, rel=1e-14)

    def test_only_given_names_move(self):
        p = {"a": np.ones(2), "b": np.ones(2)}
        Adam(0.1).step(p, {"a": np.ones(2)})
        np.testing.assert_array_equal(p["b"], 1.0)


class TestTrain:
    def test_config_validation(self):
        for bad in ({"batch_size": 0}, {"max_epochs": -1}, {"learning_rate": 0.0}, {"lambda_s": -1.0},
                    {"validation_fraction": 1.0}, {"loss": "huber"}, {"frozen": ("head",)}):
            with pytest.raises(InvalidArgumentError):
                TrainConfig(**bad)

    def test_default_learning_rates(self):
        ds = toy()
        assert default_learning_rate(build_model(ds, 5, 4)) == 1e-2
        deep = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (4,)))
        assert default_learning_rate(deep) == 1e-3
        assert default_learning_rate(deep, frozen=("deep",)) == 1e-2

    def test_zero_epochs_is_identity(self):
        ds = toy()
        m = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (4,), seed=1))
        fit, rep = train(m, ds, TrainConfig(max_epochs=0))
        assert model_to_bytes(fit) == model_to_bytes(m)
        assert rep.stopped_epoch == 0 and rep.train_risk == []
        assert np.isfinite(rep.initial_train_risk)

    def test_input_model_untouched(self):
        ds = toy()
        m = build_model(ds, 5, 4)
        before = model_to_bytes(m)
        train(m, ds, TrainConfig(max_epochs=3))
        assert model_to_bytes(m) == before

    def test_deterministic(self):
        ds = toy()
        m = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (6,), dropout_rate=0.3, seed=2))
        cfg = TrainConfig(max_epochs=5, batch_size=8, seed=11)
        a, ra = train(m, ds, cfg)
        b, rb = train(m, ds, cfg)
        assert model_to_bytes(a) == model_to_bytes(b)
        assert ra.val_risk == rb.val_risk

    def test_restores_best_parameters(self):
        ds = toy(n=30)
        m = build_model(ds, 5, 4, deep=DeepConfig("generic", (32,), seed=0))
        fit, rep = train(m, ds, TrainConfig(max_epochs=25, patience=5, learning_rate=0.05))
        assert rep.best_validation_risk == min([rep.initial_validation_risk] + rep.val_risk)
        data = fit.prepare(ds)
        _, val_rows = _validation_rows(ds.n, 0.2, 0)
        got = evaluate_risk(fit, data, ds.outcome, ds.outcome_grid.quad_weights, val_rows)
        assert got == pytest.approx(rep.best_validation_risk, rel=1e-12)

    def test_early_stopping(self):
        ds = toy(n=30)
        _, rep = train(build_model(ds, 5, 4), ds, TrainConfig(max_epochs=500, patience=3, learning_rate=0.1))
        assert rep.stopped_epoch < 500
        assert rep.stopped_epoch - rep.best_epoch == 3

    def test_best_validation_monotone(self):
        ds = planted_noiseless(n=120)
        _, rep = train(build_model(ds, 6, 6), ds,
                       TrainConfig(max_epochs=60, patience=60, lambda_s=0, lambda_t=0, batch_size=16))
        running = np.minimum.accumulate(rep.val_risk)
        assert np.all(np.diff(running) <= 0)
        # the raw curve may wobble, but never far above the running best
        assert np.all(np.array(rep.val_risk) <= 1.05 * np.concatenate([[rep.initial_validation_risk], running[:-1]]))

    def test_noiseless_planted_converges(self):
        ds = planted_noiseless()
        _, rep = train(build_model(ds, 6, 6), ds,
                       TrainConfig(batch_size=16, max_epochs=400, patience=400, lambda_s=0, lambda_t=0,
                                   learning_rate=0.05))
        assert min(rep.train_risk) <= 1e-6 * rep.initial_train_risk

    def test_frozen_parts_stay_fixed(self):
        ds = toy()
        m = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (4,), seed=3))
        fit, _ = train(m, ds, TrainConfig(max_epochs=2, frozen=("structured",)))
        np.testing.assert_array_equal(fit.structured.terms[0].theta, 0.0)
        assert not np.array_equal(fit.deep.layers[0].weights, m.deep.layers[0].weights)
        fit, _ = train(m, ds, TrainConfig(max_epochs=2, frozen=("deep",)))
        np.testing.assert_array_equal(fit.deep.layers[0].weights, m.deep.layers[0].weights)

    def test_no_deep_part_matches_silent_frozen_deep_part(self):
        ds = toy()
        cfg = TrainConfig(max_epochs=4, lambda_s=0.1, lambda_t=0.1)
        plain, _ = train(build_model(ds, 5, 4), ds, cfg)
        m = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (6,), dropout_rate=0.0, seed=0))
        m.deep.layers[-1].weights[:] = 0.0
        m.deep.layers[-1].bias[:] = 0.0
        m.deep.mark_updated()
        silent, _ = train(m, ds, replace(cfg, frozen=("deep",)))
        np.testing.assert_allclose(silent.predict(ds), plain.predict(ds), rtol=0, atol=1e-12)

    def test_divergence_raises(self):
        ds = toy()
        with pytest.raises(TrainingFailure) as err:
            train(build_model(ds, 5, 4), ds, TrainConfig(max_epochs=5, learning_rate=1e200))
        assert err.value.last_finite_epoch >= 0

    def test_epoch_callback(self):
        ds = toy()
        records = []
        train(build_model(ds, 5, 4), ds, TrainConfig(max_epochs=3, patience=10), on_epoch=records.append)
        assert [r["epoch"] for r in records] == [1, 2, 3]
        assert set(records[0]) >= {"train_risk", "val_risk", "lr"}

    def test_too_few_rows(self):
        ds = toy(n=1)
        with pytest.raises(InvalidArgumentError):
            train(build_model(ds, 5, 4), ds)


class TestGradCheck:
    def test_structured_only(self):
        ds = toy(n=6, j=2, r=10, q=8)
        m = build_model(ds, 4, 4)
        rng = np.random.default_rng(0)
        for p in m.parameters().values():
            p[...] = rng.standard_normal(p.shape)
        rep = grad_check(m, ds, 1e-6, lambda_s=0.3, lambda_t=0.7)
        assert rep.passed, rep.per_parameter

    @pytest.mark.parametrize("arch", ["shared_codec", "generic"])
    @pytest.mark.parametrize("link", ["identity", "exp"])
    def test_with_deep(self, arch, link):
        ds = toy(n=5, r=6, q=5)
        m = build_model(ds, 4, 4, deep=DeepConfig(arch, (5,), "tanh", 0.5, seed=4), link=link)
        m.structured.intercept_theta[:] = 0.1
        rep = grad_check(m, ds, 1e-5)
        assert rep.passed, rep.per_parameter

    def test_intercept_only(self):
        ds = toy(n=4, j=0)
        rep = grad_check(build_model(ds, 4, 4), ds)
        assert rep.passed and rep.num_parameters == 4

    def test_detects_wrong_gradient(self, monkeypatch):
        import ssfr.training as tr

        ds = toy(n=5, r=6, q=5)
        m = build_model(ds, 4, 4)
        real = tr.structured_gradients

        def broken(*args, **kw):
            g0, gs = real(*args, **kw)
            return g0 * 1.01, gs

        monkeypatch.setattr(tr, "structured_gradients", broken)
        m.structured.intercept_theta[:] = 1.0
        assert not grad_check(m, ds, 1e-6).passed


class TestSelectSmoothing:
    def test_picks_best_candidate(self):
        ds = toy(n=30)
        m = build_model(ds, 5, 4)
        records = []
        lam, fit, rep, scores = select_smoothing(m, ds, TrainConfig(max_epochs=4), grid=(1e-3, 10.0),
                                                 on_epoch=records.append)
        assert [s[0] for s in scores] == [1e-3, 10.0]
        assert rep.best_validation_risk == min(s[1] for s in scores)
        assert lam == min(scores, key=lambda s: s[1])[0]
        assert {r["lambda"] for r in records} == {1e-3, 10.0}

    def test_empty_grid(self):
        ds = toy()
        with pytest.raises(InvalidArgumentError):
            select_smoothing(build_model(ds, 5, 4), ds, grid=())
