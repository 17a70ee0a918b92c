import json
import struct

import numpy as np
import pytest

from ssfr.dataio import FunctionalDataset, fit_standardizer
from ssfr.deep import DeepConfig
from ssfr.errors import CheckpointError, InvalidArgumentError
from ssfr.grid import make_uniform_grid
from ssfr.model import (
    LINKS,
    build_model,
    load_model,
    load_model_bytes,
    model_to_bytes,
    predict,
    predict_parts,
    save_model,
)
from ssfr.structured import structured_forward, surface


def make_ds(n=8, j=2, r=12, q=10, seed=0):
    rng = np.random.default_rng(seed)
    g, h = make_uniform_grid(0, 1, r), make_uniform_grid(0, 2, q)
    xs = tuple(rng.standard_normal((n, r)) for _ in range(j))
    return FunctionalDataset(xs, (g,) * j, rng.standard_normal((n, q)), h, tuple(f"x{i}" for i in range(j)))


def randomize(model, seed=1):
    rng = np.random.default_rng(seed)
    for p in model.parameters().values():
        p[...] = rng.standard_normal(p.shape) * 0.3
    if model.deep is not None:
        model.deep.mark_updated()
    return model


class TestPredict:
    def test_zero_parameters(self):
        ds = make_ds()
        m = build_model(ds, 5, 4)
        np.testing.assert_array_equal(predict(m, ds), 0.0)
        m_exp = build_model(ds, 5, 4, link="exp")
        np.testing.assert_array_equal(predict(m_exp, ds), 1.0)

    def test_structured_only_matches_forward(self):
        ds = make_ds()
        m = randomize(build_model(ds, 5, 4))
        lp, lm = predict_parts(m, ds)
        np.testing.assert_array_equal(lm, 0.0)
        np.testing.assert_array_equal(predict(m, ds), structured_forward(m.structured, m.structured.encode(ds)))

    @pytest.mark.parametrize("link", sorted(LINKS))
    @pytest.mark.parametrize("arch", ["shared_codec", "generic"])
    def test_parts_sum_to_prediction(self, link, arch):
        ds = make_ds()
        m = randomize(build_model(ds, 5, 4, deep=DeepConfig(arch, (6,), "tanh", 0.2), link=link))
        lp, lm = m.predict_parts(ds)
        np.testing.assert_allclose(LINKS[link][0](lp + lm), m.predict(ds), rtol=1e-14, atol=0)

    def test_zero_thetas_give_intercept(self):
        ds = make_ds()
        m = build_model(ds, 5, 4)
        m.structured.intercept_theta[:] = [1.0, 2.0, -1.0, 0.5]
        lp, _ = m.predict_parts(ds)
        np.testing.assert_allclose(lp, np.tile(m.structured.intercept_theta @ m.structured.t_eval, (ds.n, 1)))

    def test_linear_in_theta(self):
        ds = make_ds()
        m1, m2 = randomize(build_model(ds, 5, 4), 1), randomize(build_model(ds, 5, 4), 2)
        m3 = build_model(ds, 5, 4)
        for k, p in m3.parameters().items():
            p[...] = 2.0 * m1.parameters()[k] - 0.5 * m2.parameters()[k]
        np.testing.assert_allclose(m3.predict(ds), 2.0 * m1.predict(ds) - 0.5 * m2.predict(ds), atol=1e-12)

    def test_sigmoid_is_stable(self):
        z = np.array([-1000.0, -30.0, 0.0, 30.0, 1000.0])
        out = LINKS["sigmoid"][0](z)
        assert np.all(np.isfinite(out))
        assert out[2] == 0.5 and out[0] == 0.0 and out[-1] == 1.0

    def test_dataset_mismatch(self):
        m = build_model(make_ds(), 5, 4)
        with pytest.raises(InvalidArgumentError):
            m.predict(make_ds(r=13))
        with pytest.raises(InvalidArgumentError):
            m.predict(make_ds(q=11))
        with pytest.raises(InvalidArgumentError):
            m.predict(make_ds(j=1))

    def test_unknown_link(self):
        with pytest.raises(InvalidArgumentError):
            build_model(make_ds(), 5, 4, link="probit")


class TestCheckpoint:
    def full_model(self):
        ds = make_ds()
        m = build_model(ds, 5, 4, deep=DeepConfig("shared_codec", (7, 3), "tanh", 0.1, seed=3),
                        standardizer=fit_standardizer(ds))
        m.deep_offset = randomize(build_model(ds, 5, 4), 9).structured
        m.metadata = {"note": "x", "split": {"train_rows": [0, 2]}}
        return ds, randomize(m)

    @pytest.mark.parametrize("arch", ["shared_codec", "generic", None])
    def test_round_trip_bit_exact(self, tmp_path, arch):
        ds = make_ds()
        deep = None if arch is None else DeepConfig(arch, (4,), "relu", 0.0)
        m = randomize(build_model(ds, 5, 4, deep=deep))
        save_model(m, tmp_path / "m.ckpt")
        back = load_model(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(back.predict(ds), m.predict(ds))
        assert model_to_bytes(back) == model_to_bytes(m)

    def test_everything_survives(self):
        ds, m = self.full_model()
        back = load_model_bytes(model_to_bytes(m))
        np.testing.assert_array_equal(back.predict(ds), m.predict(ds))
        for a, b in zip(back.predict_parts(ds), m.predict_parts(ds)):
            np.testing.assert_array_equal(a, b)
        assert back.metadata == m.metadata
        assert back.deep.config == m.deep.config
        np.testing.assert_array_equal(back.standardizer.means[1], m.standardizer.means[1])
        # one shared s-basis object after reload, as before
        assert back.structured.terms[0].s_basis is back.structured.terms[1].s_basis

    def test_header_records_knots(self):
        _, m = self.full_model()
        data = model_to_bytes(m)
        hlen = struct.unpack_from("<8sIQI", data)[2]
        header = json.loads(data[24:24 + hlen])
        knots = header["bases"][header["t_basis"]]["knots"]
        np.testing.assert_array_equal(knots, m.structured.t_basis.knots)
        # surfaces are reconstructable from the header alone
        back = load_model_bytes(data)
        t = back.structured.terms[0]
        np.testing.assert_array_equal(surface(t.theta, t.s_basis, back.structured.t_basis),
                                      surface(m.structured.terms[0].theta, m.structured.terms[0].s_basis,
                                              m.structured.t_basis))

    def test_bad_magic(self):
        _, m = self.full_model()
        data = bytearray(model_to_bytes(m))
        data[0:4] = b"XXXX"
        with pytest.raises(CheckpointError, match="magic"):
            load_model_bytes(bytes(data))

    def test_corrupt_payload(self):
        _, m = self.full_model()
        data = bytearray(model_to_bytes(m))
        data[-3] ^= 0xFF
        with pytest.raises(CheckpointError, match="checksum"):
            load_model_bytes(bytes(data))

    def test_truncated_and_version(self):
        _, m = self.full_model()
        data = model_to_bytes(m)
        with pytest.raises(CheckpointError):
            load_model_bytes(data[:10])
        with pytest.raises(CheckpointError):
            load_model_bytes(data[:-8])
        bumped = data[:8] + struct.pack("<I", 99) + data[12:]
        with pytest.raises(CheckpointError, match="version"):
            load_model_bytes(bumped)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "nope.ckpt")

    def test_copy_is_independent(self):
        ds, m = self.full_model()
        c = m.copy()
        c.structured.intercept_theta[:] += 1.0
        assert not np.array_equal(c.predict(ds), m.predict(ds))
