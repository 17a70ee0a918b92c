"""Semi-structured model ``mu = link(lambda_plus + lambda_minus)`` and checkpoints.

Checkpoint layout (format version 1, all integers little-endian)::

    8 bytes   magic  b"SSFRCKPT"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    4 bytes   uint32 CRC-32 of header and payload
    H bytes   UTF-8 JSON header: model description plus an array table
              [{"name", "shape", "offset"}] with byte offsets into the payload
    ...       payload: float64 little-endian arrays, C order
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .dataio import Standardizer, apply_standardizer, atomic_write_bytes
from .deep import DeepConfig, DeepNet, DenseLayer
from .errors import CheckpointError, InvalidArgumentError
from .grid import Grid, bspline_basis
from .structured import StructuredPart, StructuredTerm, structured_forward

MAGIC = b"SSFRCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQI")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# name -> (link, derivative given (eta, mu))
LINKS = {
    "identity": (lambda z: z, lambda z, mu: np.ones_like(z)),
    "exp": (np.exp, lambda z, mu: mu),
    "sigmoid": (_sigmoid, lambda z, mu: mu * (1.0 - mu)),
}


@dataclass
class PreparedData:
    """Parameter-independent inputs derived once from a dataset."""

    encoded: list
    deep_inputs: np.ndarray | None
    n: int

    def rows(self, idx):
        return PreparedData(
            [e[idx] for e in self.encoded],
            None if self.deep_inputs is None else self.deep_inputs[idx],
            len(idx),
        )


@dataclass(eq=False)
class SemiStructuredModel:
    structured: StructuredPart
    deep: DeepNet | None = None
    link: str = "identity"
    standardizer: Standardizer | None = None
    # coefficients subtracted from the deep output after orthogonalization
    deep_offset: StructuredPart | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.link not in LINKS:
            raise InvalidArgumentError(f"unknown link {self.link!r}; choose from {sorted(LINKS)}")
        if self.deep is not None:
            q = len(self.outcome_grid)
            if self.deep.config.architecture == "generic" and self.deep.layers[-1].weights.shape[0] != q:
                raise InvalidArgumentError("generic deep part must have one output per outcome grid point")

    @property
    def outcome_grid(self):
        return self.structured.t_basis.grid

    @property
    def num_outputs(self):
        return len(self.outcome_grid)

    def parameters(self):
        params = dict(self.structured.parameters())
        if self.deep is not None:
            params.update(self.deep.parameters())
        return params

    def check_dataset(self, ds):
        if not ds.outcome_grid.same_as(self.outcome_grid):
            raise InvalidArgumentError("dataset outcome grid does not match the model")
        needed = {t.predictor_index for t in self.structured.terms}
        if needed and max(needed) >= ds.num_predictors:
            raise InvalidArgumentError("dataset has fewer predictors than the model")
        for term in self.structured.terms:
            if not term.s_basis.grid.same_as(ds.predictor_grids[term.predictor_index]):
                raise InvalidArgumentError(
                    f"grid of predictor {term.predictor_index} does not match the model"
                )
        if self.deep is not None and self.deep.config.architecture == "generic":
            width = sum(len(g) for g in ds.predictor_grids)
            if width != self.deep.input_dim:
                raise InvalidArgumentError("dataset predictor grids do not match the deep input width")

    def prepare(self, ds):
        """Standardize and encode a dataset; the result is reused across epochs."""
        self.check_dataset(ds)
        if self.standardizer is not None:
            ds = apply_standardizer(self.standardizer, ds)
        encoded = self.structured.encode(ds)
        deep_inputs = None
        if self.deep is not None:
            deep_inputs = self.deep.build_inputs(ds, encoded=encoded)
        return PreparedData(encoded, deep_inputs, ds.n)

    def parts_prepared(self, data, training=False, rng=None):
        lam_plus = structured_forward(self.structured, data.encoded, n=data.n)
        if self.deep is None:
            return lam_plus, np.zeros_like(lam_plus), None
        lam_minus, cache = self.deep.forward(data.deep_inputs, training, rng)
        if self.deep_offset is not None:
            lam_minus = lam_minus - structured_forward(self.deep_offset, data.encoded, n=data.n)
        return lam_plus, lam_minus, cache

    def predict_parts(self, ds):
        lp, lm, _ = self.parts_prepared(self.prepare(ds))
        return lp, lm

    def predict(self, ds, training=False, rng=None):
        lp, lm, _ = self.parts_prepared(self.prepare(ds), training, rng)
        return LINKS[self.link][0](lp + lm)

    def copy(self):
        return load_model_bytes(model_to_bytes(self))


def predict(model, ds, training=False, rng=None):
    return model.predict(ds, training, rng)


def predict_parts(model, ds):
    return model.predict_parts(ds)


def _part_arrays(prefix, part):
    arrays = {f"{prefix}theta_0": part.intercept_theta}
    for j, term in enumerate(part.terms, start=1):
        arrays[f"{prefix}theta_{j}"] = term.theta
    return arrays


def model_to_bytes(model):
    part = model.structured
    grids, bases = [], []

    def grid_id(g):
        for i, h in enumerate(grids):
            if h.same_as(g):
                return i
        grids.append(g)
        return len(grids) - 1

    def basis_id(b):
        for i, c in enumerate(bases):
            if c is b:
                return i
        bases.append(b)
        return len(bases) - 1

    t_id = basis_id(part.t_basis)
    terms = [{"predictor_index": t.predictor_index, "basis": basis_id(t.s_basis)} for t in part.terms]
    basis_meta = [
        {"grid": grid_id(b.grid), "num_basis": b.num_basis, "degree": b.degree, "knots": b.knots.tolist()}
        for b in bases
    ]
    arrays = _part_arrays("", part)
    header = {
        "grids": [g.points.tolist() for g in grids],
        "bases": basis_meta,
        "t_basis": t_id,
        "terms": terms,
        "link": model.link,
        "deep": None,
        "standardizer": None,
        "deep_offset": model.deep_offset is not None,
        "metadata": model.metadata,
    }
    if model.deep is not None:
        cfg = model.deep.config
        header["deep"] = {
            "architecture": cfg.architecture,
            "hidden_sizes": list(cfg.hidden_sizes),
            "activation": cfg.activation,
            "dropout_rate": cfg.dropout_rate,
            "seed": cfg.seed,
            "layer_activations": [layer.activation for layer in model.deep.layers],
        }
        arrays.update(model.deep.parameters())
    if model.deep_offset is not None:
        arrays.update(_part_arrays("offset.", model.deep_offset))
    if model.standardizer is not None:
        header["standardizer"] = len(model.standardizer.scales)
        for j, (m, s) in enumerate(zip(model.standardizer.means, model.standardizer.scales)):
            arrays[f"std.mean_{j}"] = m
            arrays[f"std.scale_{j}"] = np.array([s])

    table, chunks, offset = [], [], 0
    for name, a in arrays.items():
        buf = np.ascontiguousarray(a, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(np.shape(a)), "offset": offset})
        chunks.append(buf)
        offset += len(buf)
    header["arrays"] = table
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(chunks)
    crc = zlib.crc32(hbytes + payload)
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes), crc) + hbytes + payload


def save_model(model, path):
    atomic_write_bytes(path, model_to_bytes(model))


def load_model_bytes(data):
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint is truncated")
    magic, version, hlen, crc = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    body = data[_PREFIX.size:]
    if len(body) < hlen or zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint is corrupt (checksum mismatch)")
    try:
        header = json.loads(body[:hlen].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"checkpoint header is unreadable: {exc}") from exc
    payload = body[hlen:]
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = a.reshape(entry["shape"]).astype(np.float64)

    grids = [Grid(p) for p in header["grids"]]
    bases = []
    for b in header["bases"]:
        basis = bspline_basis(grids[b["grid"]], b["num_basis"], b["degree"])
        if not np.array_equal(basis.knots, np.asarray(b["knots"])):
            raise CheckpointError("stored knots do not match the rebuilt basis")
        bases.append(basis)
    t_basis = bases[header["t_basis"]]

    def part(prefix):
        terms = [
            StructuredTerm(arrays[f"{prefix}theta_{j}"], bases[t["basis"]], t["predictor_index"])
            for j, t in enumerate(header["terms"], start=1)
        ]
        return StructuredPart(arrays[f"{prefix}theta_0"], terms, t_basis)

    deep = None
    if header["deep"] is not None:
        d = header["deep"]
        cfg = DeepConfig(d["architecture"], tuple(d["hidden_sizes"]), d["activation"], d["dropout_rate"], d["seed"])
        layers = [
            DenseLayer(arrays[f"deep.W{i}"], arrays[f"deep.b{i}"], act)
            for i, act in enumerate(d["layer_activations"])
        ]
        t_eval = t_basis.eval_matrix if cfg.architecture == "shared_codec" else None
        deep = DeepNet(cfg, layers, t_eval)
    std = None
    if header["standardizer"] is not None:
        k = header["standardizer"]
        std = Standardizer(
            tuple(arrays[f"std.mean_{j}"] for j in range(k)),
            tuple(float(arrays[f"std.scale_{j}"][0]) for j in range(k)),
        )
    return SemiStructuredModel(
        structured=part(""),
        deep=deep,
        link=header["link"],
        standardizer=std,
        deep_offset=part("offset.") if header["deep_offset"] else None,
        metadata=header.get("metadata", {}),
    )


def load_model(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return load_model_bytes(data)


def build_model(ds, num_basis_s=20, num_basis_t=20, degree=3, deep=None, link="identity",
                standardizer=None):
    """Zero-initialized structured part plus an optional freshly initialized deep part."""
    from .structured import build_structured_part

    part = build_structured_part(ds.predictor_grids, ds.outcome_grid, num_basis_s, num_basis_t, degree)
    net = None
    if deep is not None:
        if deep.architecture == "shared_codec":
            width = sum(t.theta.shape[1] for t in part.terms)
        else:
            width = sum(len(g) for g in ds.predictor_grids)
        net = DeepNet.create(deep, width, len(ds.outcome_grid), part.t_eval)
    return SemiStructuredModel(part, net, link, standardizer)
