import numpy as np
import pytest

from ssfr.dataio import FunctionalDataset
from ssfr.errors import DegenerateDataError, InvalidArgumentError
from ssfr.grid import make_uniform_grid
from ssfr.metrics import surface_error
from ssfr.model import build_model
from ssfr.simgen import (
    BUMPS,
    NUM_HARMONICS,
    SimConfig,
    bumps_surface,
    generate,
    make_true_surface,
    nonlinear_effect,
    sample_predictors,
)
from ssfr.structured import surface
from ssfr.training import TrainConfig, train


class TestConfig:
    @pytest.mark.parametrize("bad", [{"n": 0}, {"R": 1}, {"snr": 0.0}, {"snr": -1.0},
                                     {"nonlinear_amplitude": -0.1}, {"surface": "waves"}, {"J": 1.5}])
    def test_rejects(self, bad):
        with pytest.raises(InvalidArgumentError):
            SimConfig(**bad)


class TestSurfaces:
    def test_bumps_peak(self):
        g = make_uniform_grid(0, 1, 101)
        w = bumps_surface(g, g)
        i, j = np.unravel_index(np.argmax(w), w.shape)
        top = max(BUMPS, key=lambda b: b[2])
        assert (g.points[i], g.points[j]) == pytest.approx(top[:2], abs=1e-12)
        # the mirrored surface peaks at 1 - s_c
        i, j = np.unravel_index(np.argmax(bumps_surface(g, g, mirror=True)), w.shape)
        assert g.points[i] == pytest.approx(1 - top[0], abs=1e-12)

    def test_bumps_on_other_domain(self):
        a, b = make_uniform_grid(0, 1, 21), make_uniform_grid(-2, 6, 21)
        np.testing.assert_array_equal(bumps_surface(b, b), bumps_surface(a, a))

    def test_planted_zero(self):
        g = make_uniform_grid(0, 1, 30)
        np.testing.assert_array_equal(make_true_surface("planted_theta", g, g, theta=np.zeros((5, 6))), 0.0)

    def test_unknown_and_missing(self):
        g = make_uniform_grid(0, 1, 10)
        with pytest.raises(InvalidArgumentError):
            make_true_surface("waves", g, g)
        with pytest.raises(InvalidArgumentError):
            make_true_surface("planted_theta", g, g)
        with pytest.raises(InvalidArgumentError):
            make_true_surface("custom", g, g, mesh=np.zeros((3, 3)))


class TestPredictors:
    def test_deterministic(self):
        g = make_uniform_grid(0, 1, 50)
        np.testing.assert_array_equal(sample_predictors(7, g, 3), sample_predictors(7, g, 3))
        assert not np.array_equal(sample_predictors(7, g, 3), sample_predictors(7, g, 4))

    def test_formula_without_level(self):
        g = make_uniform_grid(0, 2, 37)
        x = sample_predictors(4, g, 9, level=False)
        rng = np.random.default_rng(9)
        a = rng.standard_normal((4, NUM_HARMONICS))
        b = rng.standard_normal((4, NUM_HARMONICS))
        u = g.points / 2.0
        ref = np.zeros((4, 37))
        for i in range(4):
            for m in range(1, NUM_HARMONICS + 1):
                ref[i] += (a[i, m - 1] * np.sin(2 * np.pi * m * u) + b[i, m - 1] * np.cos(2 * np.pi * m * u)) / m
        np.testing.assert_allclose(x, ref, atol=1e-12)

    def test_level_shifts_each_curve(self):
        g = make_uniform_grid(0, 1, 37)
        diff = sample_predictors(4, g, 9) - sample_predictors(4, g, 9, level=False)
        np.testing.assert_allclose(diff, np.repeat(diff[:, :1], 37, axis=1), atol=1e-12)
        assert np.all(diff[:, 0] != 0)

    def test_pointwise_mean(self):
        g = make_uniform_grid(0, 1, 100)
        assert np.abs(sample_predictors(2000, g, 0).mean(axis=0)).max() <= 0.1

    def test_smoothness_bound(self):
        # |second difference of sin(w u)| <= (w h)^2, and the level cancels
        g = make_uniform_grid(0, 1, 200)
        h = g.points[1] - g.points[0]
        x = sample_predictors(20, g, 5)
        rng = np.random.default_rng(5)
        a = rng.standard_normal((20, NUM_HARMONICS))
        b = rng.standard_normal((20, NUM_HARMONICS))
        m = np.arange(1, NUM_HARMONICS + 1)
        bound = ((np.abs(a) + np.abs(b)) / m) @ ((2 * np.pi * m * h) ** 2)
        second = np.abs(np.diff(x, 2, axis=1)).max(axis=1)
        assert np.all(second <= bound * (1 + 1e-9))


class TestGenerate:
    def test_shapes_and_determinism(self):
        cfg = SimConfig(n=20, R=30, Q=25, J=3, seed=4)
        ds, truth = generate(cfg)
        assert (ds.n, ds.num_predictors, ds.outcome.shape) == (20, 3, (20, 25))
        assert len(truth["surfaces"]) == 3 and truth["surfaces"][0].shape == (30, 25)
        ds2, _ = generate(cfg)
        np.testing.assert_array_equal(ds.outcome, ds2.outcome)
        np.testing.assert_array_equal(ds.predictors[2], ds2.predictors[2])

    def test_noiseless_is_quadrature(self):
        ds, truth = generate(SimConfig(n=15, R=40, Q=20, J=2, seed=1))
        ref = sum((x * truth["s_grid"].quad_weights) @ w for x, w in zip(ds.predictors, truth["surfaces"]))
        np.testing.assert_allclose(truth["noiseless"], ref, atol=1e-12)

    def test_zero_surface_is_degenerate(self):
        with pytest.raises(DegenerateDataError):
            generate(SimConfig(n=5, R=10, Q=10, surface="planted_theta", planted_theta=(np.zeros((4, 4)),)))

    def test_custom_mesh(self):
        mesh = np.outer(np.linspace(0, 1, 10), np.ones(8))
        _, truth = generate(SimConfig(n=5, R=10, Q=8, surface="custom", custom_mesh=(mesh,)))
        np.testing.assert_array_equal(truth["surfaces"][0], mesh)

    @pytest.mark.parametrize("snr", [0.1, 1.0, 10.0])
    def test_snr_and_noise(self, snr):
        ds, truth = generate(SimConfig(n=1000, R=50, Q=100, snr=snr, seed=7))
        noise = ds.outcome - truth["noiseless"]
        ratio = np.var(truth["noiseless"]) / np.var(noise)
        assert ratio == pytest.approx(snr, rel=0.1)
        flat = noise.ravel()
        lag1 = np.corrcoef(flat[:-1], flat[1:])[0, 1]
        assert abs(lag1) <= 0.05

    def test_nonlinear_term(self):
        cfg = SimConfig(n=50, R=40, Q=30, nonlinear_amplitude=0.5, seed=2)
        ds, truth = generate(cfg)
        ref = nonlinear_effect(ds.predictors[0], truth["s_grid"], truth["t_grid"], 0.5)
        np.testing.assert_array_equal(truth["nonlinear"], ref)
        np.testing.assert_allclose(truth["noiseless"], truth["linear"] + ref, atol=1e-15)
        # even in the curve
        np.testing.assert_allclose(nonlinear_effect(-ds.predictors[0], truth["s_grid"], truth["t_grid"], 0.5),
                                   ref, atol=1e-12)

    def test_planted_round_trip(self):
        theta = np.random.default_rng(0).standard_normal((6, 6))
        ds, truth = generate(SimConfig(n=300, R=40, Q=40, surface="planted_theta", planted_theta=(theta,), seed=2))
        clean = FunctionalDataset(ds.predictors, ds.predictor_grids, truth["noiseless"], ds.outcome_grid, ds.names)
        fit, _ = train(build_model(clean, 6, 6), clean,
                       TrainConfig(batch_size=16, max_epochs=300, patience=300, lambda_s=0, lambda_t=0,
                                   learning_rate=0.05))
        term = fit.structured.terms[0]
        est = surface(term.theta, term.s_basis, fit.structured.t_basis)
        err = surface_error(truth["surfaces"][0], est, truth["s_grid"].quad_weights, truth["t_grid"].quad_weights)
        assert err <= 1e-2
