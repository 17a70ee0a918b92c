"""Command-line entry point: ``ssfr <verb> [options]``.

Verbs: simulate, fit, predict, evaluate, pho, surfaces, bench. Every run reads
one JSON config document (``--config``, plus ``--set key.path=value``
overrides), validates it against :data:`SCHEMA`, fills in defaults and echoes
the resolved document to ``<out-dir>/config.json``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure, 3 IO error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .dataio import (
    atomic_write_text,
    fit_standardizer,
    load_manifest,
    read_matrix,
    save_dataset,
    split_rows,
    write_json,
    write_matrix,
)
from .deep import ACTIVATIONS, ARCHITECTURES, DeepConfig
from .errors import (
    CapacityError,
    CheckpointError,
    DegenerateDataError,
    FormatError,
    InvalidArgumentError,
    SSFRError,
    TrainingFailure,
)
from .metrics import EVAL_REPORT_SCHEMA_ID, evaluate
from .model import LINKS, build_model, load_model, save_model
from .pho import orthogonalize_model
from .simgen import SURFACES, SimConfig, generate
from .structured import surface
from .training import TrainConfig, select_smoothing, train

log = logging.getLogger("ssfr")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class ConfigError(InvalidArgumentError):
    pass


# ---------------------------------------------------------------- config schema

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and np.isfinite(v)


def _int_at_least(lo):
    return (lambda v: _is_int(v) and v >= lo), f"an integer >= {lo}"


def _num(pred, text):
    return (lambda v: _is_num(v) and pred(v)), text


def _choice(options):
    return (lambda v: v in options), f"one of {sorted(options)}"


def _optional(check):
    fn, text = check
    return (lambda v: v is None or fn(v)), f"null or {text}"


def _list_of(check, nonempty=True):
    fn, text = check
    return (
        lambda v: isinstance(v, list) and (len(v) > 0 or not nonempty) and all(fn(x) for x in v)
    ), f"a{' nonempty' if nonempty else ''} list of {text}"


_BOOL = ((lambda v: isinstance(v, bool)), "true or false")
_STR = ((lambda v: isinstance(v, str) and v != ""), "a nonempty string")
_DOMAIN = ((lambda v: isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v)
            and v[0] < v[1]), "a list [lo, hi] with lo < hi")
_ANY_LIST = ((lambda v: isinstance(v, list)), "a list")

SCHEMA = {
    "seed": _int_at_least(0),
    "data": _optional(_STR),
    "simulate": {
        "n": _int_at_least(1),
        "R": _int_at_least(2),
        "Q": _int_at_least(2),
        "J": _int_at_least(1),
        "snr": _num(lambda v: v > 0, "a number > 0"),
        "surface": _choice(SURFACES),
        "nonlinear_amplitude": _num(lambda v: v >= 0, "a number >= 0"),
        "s_domain": _DOMAIN,
        "t_domain": _DOMAIN,
        "degree": _int_at_least(0),
        "planted_theta": _optional(_ANY_LIST),
        "predictor_level": _BOOL,
    },
    "model": {
        "num_basis_s": _int_at_least(1),
        "num_basis_t": _int_at_least(1),
        "degree": _int_at_least(0),
        "link": _choice(tuple(LINKS)),
        "standardize": _BOOL,
        "structured": _BOOL,
        "deep": {
            "architecture": _choice(("none",) + tuple(ARCHITECTURES)),
            "hidden_sizes": _list_of(_int_at_least(1)),
            "activation": _choice(tuple(ACTIVATIONS)),
            "dropout_rate": _num(lambda v: 0 <= v < 1, "a number in [0, 1)"),
        },
    },
    "train": {
        "batch_size": _int_at_least(1),
        "max_epochs": _int_at_least(0),
        "patience": _int_at_least(1),
        "learning_rate": _optional(_num(lambda v: v > 0, "a number > 0")),
        "lambda_s": _num(lambda v: v >= 0, "a number >= 0"),
        "lambda_t": _num(lambda v: v >= 0, "a number >= 0"),
        "validation_fraction": _num(lambda v: 0 <= v < 1, "a number in [0, 1)"),
        "lambda_grid": _optional(_list_of(_num(lambda v: v >= 0, "numbers >= 0"))),
    },
    "split": {
        "test_fraction": _num(lambda v: 0 < v < 1, "a number in (0, 1)"),
    },
    "evaluate": {
        "skip_degenerate": _BOOL,
    },
    "pho": {
        "method": _choice(("auto", "svd", "gram")),
        "rows": _choice(("train", "all")),
        "rtol": _optional(_num(lambda v: v > 0, "a number > 0")),
    },
    "surfaces": {
        "s_count": _optional(_int_at_least(2)),
        "t_count": _optional(_int_at_least(2)),
    },
    "bench": {
        "n": _list_of(_int_at_least(2)),
        "J": _list_of(_int_at_least(1)),
        "R": _list_of(_int_at_least(4)),
        "paths": _list_of(_choice(bench_mod.PATHS)),
        "batch_size": _int_at_least(1),
        "epochs": _int_at_least(1),
        "num_basis": _int_at_least(4),
    },
}

DEFAULTS = {
    "seed": 0,
    "data": None,
    "simulate": {
        "n": 1280, "R": 100, "Q": 100, "J": 1, "snr": 1.0, "surface": "bumps",
        "nonlinear_amplitude": 0.0, "s_domain": [0.0, 1.0], "t_domain": [0.0, 1.0],
        "degree": 3, "planted_theta": None, "predictor_level": True,
    },
    "model": {
        "num_basis_s": 20, "num_basis_t": 20, "degree": 3, "link": "identity",
        "standardize": True, "structured": True,
        "deep": {"architecture": "none", "hidden_sizes": [100], "activation": "relu",
                 "dropout_rate": 0.2},
    },
    "train": {
        "batch_size": 32, "max_epochs": 200, "patience": 20, "learning_rate": None,
        "lambda_s": 1.0, "lambda_t": 1.0, "validation_fraction": 0.2, "lambda_grid": None,
    },
    "split": {"test_fraction": 0.2},
    "evaluate": {"skip_degenerate": False},
    "pho": {"method": "auto", "rows": "train", "rtol": None},
    "surfaces": {"s_count": None, "t_count": None},
    "bench": {
        "n": list(bench_mod.BENCH_N), "J": list(bench_mod.BENCH_J), "R": list(bench_mod.BENCH_R),
        "paths": list(bench_mod.PATHS), "batch_size": 16, "epochs": 2, "num_basis": 20,
    },
}


def _locate(text, key):
    if text is None:
        return ""
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if not m:
        return ""
    return f"line {text.count(chr(10), 0, m.start()) + 1}: "


def validate_config(doc, text=None, source="config"):
    """Check ``doc`` against :data:`SCHEMA`; unknown keys and bad values raise ConfigError."""

    def walk(node, schema, path):
        if not isinstance(node, dict):
            raise ConfigError(f"{source}: {_locate(text, path[-1]) if path else ''}"
                              f"{'.'.join(path) or 'document'} must be an object")
        for key, value in node.items():
            where = path + [key]
            if key not in schema:
                raise ConfigError(
                    f"{source}: {_locate(text, key)}unknown key {'.'.join(where)!r}; "
                    f"allowed: {sorted(schema)}"
                )
            rule = schema[key]
            if isinstance(rule, dict):
                walk(value, rule, where)
            else:
                fn, desc = rule
                if not fn(value):
                    raise ConfigError(
                        f"{source}: {_locate(text, key)}{'.'.join(where)} must be {desc}, got {value!r}"
                    )

    walk(doc, SCHEMA, [])


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _apply_override(doc, item):
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not a section")
    node[parts[-1]] = value


def load_config(path=None, overrides=(), seed=None):
    """Read, override, validate and default-fill a run config."""
    doc, text, source = {}, None, "config"
    if path is not None:
        source = str(path)
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    validate_config(doc, text, source)
    for item in overrides:
        _apply_override(doc, item)
    validate_config(doc, None, "--set")
    if seed is not None:
        doc["seed"] = seed
    return _merge(DEFAULTS, doc)


# ---------------------------------------------------------------- helpers

def _write_mesh(path, s_points, t_points, w):
    ss, tt = np.meshgrid(s_points, t_points, indexing="ij")
    write_matrix(path, np.column_stack([ss.ravel(), tt.ravel(), np.asarray(w).ravel()]),
                 header=["s", "t", "w"])


def _dataset(args, cfg):
    path = args.data or cfg["data"]
    if not path:
        raise ConfigError("no dataset given; pass --data or set 'data' in the config")
    return load_manifest(path)


def _deep_config(cfg):
    d = cfg["model"]["deep"]
    if d["architecture"] == "none":
        return None
    return DeepConfig(d["architecture"], tuple(d["hidden_sizes"]), d["activation"],
                      d["dropout_rate"], cfg["seed"])


def _train_config(cfg, frozen):
    t = cfg["train"]
    return TrainConfig(
        batch_size=t["batch_size"], max_epochs=t["max_epochs"], patience=t["patience"],
        learning_rate=t["learning_rate"], lambda_s=t["lambda_s"], lambda_t=t["lambda_t"],
        validation_fraction=t["validation_fraction"], seed=cfg["seed"], frozen=frozen,
    )


def _report_json(report):
    d = report.to_dict()
    d.pop("wall_time")  # timing stays in the log so numeric artifacts are reproducible
    return d


def _write_predictions(out, stem, values, grid):
    write_matrix(out / f"{stem}.csv", values)
    write_json(out / f"{stem}.json", {
        "n": int(values.shape[0]), "Q": int(values.shape[1]), "outcome_grid": grid.to_spec(),
    })


def _surface_points(model, term, cfg):
    s_count, t_count = cfg["surfaces"]["s_count"], cfg["surfaces"]["t_count"]
    sb, tb = term.s_basis, model.structured.t_basis
    s = sb.grid.points if s_count is None else np.linspace(sb.lo, sb.hi, s_count)
    t = tb.grid.points if t_count is None else np.linspace(tb.lo, tb.hi, t_count)
    return np.asarray(s), np.asarray(t)


def _write_surfaces(out, model, cfg, suffix="", part=None):
    part = model.structured if part is None else part
    files = []
    for j, term in enumerate(part.terms):
        s, t = _surface_points(model, term, cfg)
        w = surface(term.theta, term.s_basis, part.t_basis, s, t)
        name = f"surface_{j}{suffix}.csv"
        _write_mesh(out / name, s, t, w)
        files.append(name)
    return files


# ---------------------------------------------------------------- commands

def cmd_simulate(args, cfg, out):
    s = cfg["simulate"]
    planted = None
    if s["planted_theta"] is not None:
        planted = tuple(np.asarray(th, dtype=np.float64) for th in s["planted_theta"])
    sim = SimConfig(
        n=s["n"], R=s["R"], Q=s["Q"], J=s["J"], snr=s["snr"], seed=cfg["seed"], surface=s["surface"],
        nonlinear_amplitude=s["nonlinear_amplitude"], s_domain=tuple(s["s_domain"]),
        t_domain=tuple(s["t_domain"]), planted_theta=planted, degree=s["degree"],
        predictor_level=s["predictor_level"],
    )
    ds, truth = generate(sim)
    manifest = save_dataset(ds, out / "data")
    tdir = out / "truth"
    for j, w in enumerate(truth["surfaces"]):
        _write_mesh(tdir / f"surface_{j}.csv", truth["s_grid"].points, truth["t_grid"].points, w)
    write_matrix(tdir / "noiseless.csv", truth["noiseless"])
    write_json(tdir / "config.json", {**s, "seed": cfg["seed"], "noise_sd": truth["noise_sd"]})
    print(f"simulated n={ds.n} J={ds.num_predictors} R={s['R']} Q={s['Q']} snr={s['snr']} "
          f"noise_sd={truth['noise_sd']:.6g} -> {manifest}")


def cmd_fit(args, cfg, out):
    ds = _dataset(args, cfg)
    m = cfg["model"]
    deep = _deep_config(cfg)
    if not m["structured"] and deep is None:
        raise ConfigError("model.structured=false needs a deep part (model.deep.architecture)")
    train_rows, test_rows = split_rows(ds.n, cfg["split"]["test_fraction"], cfg["seed"])
    train_ds, test_ds = ds.subset(train_rows), ds.subset(test_rows)
    std = fit_standardizer(train_ds) if m["standardize"] else None
    model = build_model(train_ds, m["num_basis_s"], m["num_basis_t"], m["degree"], deep, m["link"], std)
    model.metadata = {
        "names": list(ds.names),
        "split": {"n": ds.n, "seed": cfg["seed"], "test_fraction": cfg["split"]["test_fraction"],
                  "train_rows": train_rows.tolist()},
    }
    frozen = () if m["structured"] else ("structured",)
    tcfg = _train_config(cfg, frozen)
    lines = []

    def on_epoch(record):
        lines.append(json.dumps(record, sort_keys=True))
        log.info("epoch %d train %.6g val %.6g", record["epoch"], record["train_risk"], record["val_risk"])

    result = {}
    try:
        if cfg["train"]["lambda_grid"]:
            lam, fitted, report, scores = select_smoothing(
                model, train_ds, tcfg, cfg["train"]["lambda_grid"], on_epoch=on_epoch)
            result["lambda_selected"] = lam
            result["lambda_scores"] = [{"lambda": a, "validation_risk": b} for a, b in scores]
        else:
            fitted, report = train(model, train_ds, tcfg, on_epoch=on_epoch)
    finally:
        atomic_write_text(out / "train_log.jsonl", "".join(line + "\n" for line in lines))
    save_model(fitted, out / "model.ckpt")
    xi = ds.outcome_grid.quad_weights
    skip = cfg["evaluate"]["skip_degenerate"]
    result["training"] = _report_json(report)
    result["train"] = evaluate(train_ds.outcome, fitted.predict(train_ds), xi, skip).summary()
    result["test"] = evaluate(test_ds.outcome, fitted.predict(test_ds), xi, skip).summary()
    write_json(out / "metrics.json", result)
    print(f"fit: stopped at epoch {report.stopped_epoch} (best {report.best_epoch}); "
          f"test functional_r2={result['test']['functional_r2']:.4f} -> {out / 'model.ckpt'}")


def _require_model(args):
    if not args.model:
        raise ConfigError("--model is required")
    return load_model(args.model)


def cmd_predict(args, cfg, out):
    model = _require_model(args)
    ds = _dataset(args, cfg)
    lp, lm = model.predict_parts(ds)
    mu = model.predict(ds)
    _write_predictions(out, "predictions", mu, ds.outcome_grid)
    write_matrix(out / "predictions_structured.csv", lp)
    write_matrix(out / "predictions_deep.csv", lm)
    print(f"predicted {mu.shape[0]} curves x {mu.shape[1]} points -> {out / 'predictions.csv'}")


def cmd_evaluate(args, cfg, out):
    ds = _dataset(args, cfg)
    if args.predictions:
        mu = read_matrix(args.predictions)
        if mu.shape != ds.outcome.shape:
            raise FormatError(f"{args.predictions}: shape {mu.shape} does not match outcomes {ds.outcome.shape}")
    elif args.model:
        mu = load_model(args.model).predict(ds)
    else:
        raise ConfigError("evaluate needs --predictions or --model")
    rep = evaluate(ds.outcome, mu, ds.outcome_grid.quad_weights, cfg["evaluate"]["skip_degenerate"])
    if rep.skipped_rows:
        log.warning("skipped %d degenerate curve(s): rows %s", len(rep.skipped_rows), rep.skipped_rows)
    write_json(out / "eval.json", {"schema": EVAL_REPORT_SCHEMA_ID, **rep.summary()})
    skipped = set(rep.skipped_rows)
    kept = [i for i in range(ds.n) if i not in skipped]
    table = np.column_stack([kept, rep.per_curve_r2, rep.per_curve_rel_rmse]) if kept else np.zeros((0, 3))
    lines = ["row,functional_r2,rel_rmse"]
    lines += [f"{int(r)},{a!r},{b!r}" for r, a, b in ((int(t[0]), float(t[1]), float(t[2])) for t in table)]
    atomic_write_text(out / "per_curve.csv", "\n".join(lines) + "\n")
    print(f"functional_r2={rep.functional_r2:.6f} rel_rmse={rep.rel_rmse:.6f} "
          f"rmse={rep.rmse:.6g} pearson={rep.pearson} (n={rep.n})")


def cmd_pho(args, cfg, out):
    model = _require_model(args)
    ds = _dataset(args, cfg)
    if model.deep is None:
        msg = "checkpoint has no deep part; orthogonalization is a no-op"
        log.warning(msg)
        print(f"warning: {msg}", file=sys.stderr)
        atomic_write_text(out / "pho_report.json", json.dumps({"skipped": True, "reason": msg},
                                                              indent=2, sort_keys=True) + "\n")
        save_model(model, out / "model_pho.ckpt")
        _write_surfaces(out, model, cfg)
        return
    rows = np.arange(ds.n)
    split = model.metadata.get("split", {})
    if cfg["pho"]["rows"] == "train" and split.get("n") == ds.n and "train_rows" in split:
        rows = np.asarray(split["train_rows"], dtype=np.intp)
    before = model.predict(ds)
    fixed, result = orthogonalize_model(model, ds.subset(rows), cfg["pho"]["method"],
                                        args.memory_budget, cfg["pho"]["rtol"])
    after = fixed.predict(ds)
    change = float(np.max(np.abs(after - before)) / max(np.max(np.abs(before)), 1e-300))
    report = result.report(model.structured)
    report.update({
        "rows": "train" if rows.size != ds.n else "all",
        "prediction_max_relative_change": change,
        "surfaces_before": _write_surfaces(out, model, cfg, "_before"),
        "surfaces_after": _write_surfaces(out, fixed, cfg),
    })
    save_model(fixed, out / "model_pho.ckpt")
    _write_predictions(out, "predictions_before", before, ds.outcome_grid)
    _write_predictions(out, "predictions_after", after, ds.outcome_grid)
    write_json(out / "pho_report.json", report)
    print(f"pho: rank={result.rank} residual_norm={result.residual_norm:.3g} "
          f"method={result.method} max prediction change={change:.3g}")


def cmd_surfaces(args, cfg, out):
    model = _require_model(args)
    files = _write_surfaces(out, model, cfg)
    names = model.metadata.get("names", [])
    terms = []
    for j, (term, name) in enumerate(zip(model.structured.terms, files)):
        idx = term.predictor_index
        terms.append({
            "file": name,
            "predictor_index": idx,
            "name": names[idx] if idx < len(names) else f"x{idx}",
            "s_basis": term.s_basis.to_meta(),
        })
    write_json(out / "surfaces.json", {"t_basis": model.structured.t_basis.to_meta(), "terms": terms})
    print(f"wrote {len(files)} surface(s) to {out}")


def cmd_bench(args, cfg, out):
    b = cfg["bench"]

    def on_row(row):
        log.info("bench n=%d J=%d R=%d %s: %s peak=%d", row.n, row.J, row.R, row.path, row.status,
                 row.peak_bytes)

    rows = bench_mod.run_bench(b["n"], b["J"], b["R"], b["paths"], b["batch_size"], b["epochs"],
                               cfg["seed"], b["num_basis"], args.memory_budget, on_row)
    lines = ["n,J,R,Q,path,status,peak_bytes,estimated_bytes"]
    lines += [f"{r.n},{r.J},{r.R},{r.Q},{r.path},{r.status},{r.peak_bytes},{r.estimated_bytes}" for r in rows]
    atomic_write_text(out / "bench.csv", "\n".join(lines) + "\n")
    timing = ["n,J,R,Q,path,seconds"] + [f"{r.n},{r.J},{r.R},{r.Q},{r.path},{r.seconds!r}" for r in rows]
    atomic_write_text(out / "bench_timing.csv", "\n".join(timing) + "\n")
    summary = [{"J": J, "R": R, "path": p, **v} for (J, R, p), v in sorted(bench_mod.scaling_summary(rows).items())]
    write_json(out / "bench_summary.json", summary)
    for s in summary:
        print(f"J={s['J']} R={s['R']} {s['path']}: peak n={s['n_large']} / n={s['n_small']} = {s['ratio']:.3f}")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "pho": cmd_pho,
    "surfaces": cmd_surfaces,
    "bench": cmd_bench,
}


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_bytes(text):
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([kKmMgGtT]?)i?[bB]?\s*", str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"invalid size {text!r}; use e.g. 500M or 2G")
    scale = {"": 1, "k": 1024, "m": 1024**2, "g": 1024**3, "t": 1024**4}[m.group(2).lower()]
    return int(float(m.group(1)) * scale)


def _global_options(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="JSON run config")
    parser.add_argument("--set", dest="overrides", action="append", default=d, metavar="KEY=VALUE",
                        help="override one config entry, e.g. train.max_epochs=50 (repeatable)")
    parser.add_argument("--seed", type=int, default=d, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=d, help="BLAS thread limit")
    parser.add_argument("--out-dir", default=d, help="output directory (created if missing)")
    parser.add_argument("--memory-budget", type=parse_bytes, default=d,
                        help="byte limit for dense matrices, e.g. 2G")
    parser.add_argument("-v", "--verbose", action="store_true", default=d or False)


def build_parser():
    parser = _Parser(prog="ssfr", description="Semi-structured function-on-function regression.")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    data = _Parser(add_help=False)
    data.add_argument("--data", help="dataset manifest (dataset.json)")
    model = _Parser(add_help=False)
    model.add_argument("--model", help="model checkpoint")
    sub.add_parser("simulate", parents=[common], help="simulate a dataset and its truth bundle")
    sub.add_parser("fit", parents=[common, data], help="train a model")
    sub.add_parser("predict", parents=[common, data, model], help="predict outcome curves")
    ev = sub.add_parser("evaluate", parents=[common, data, model], help="score predictions")
    ev.add_argument("--predictions", help="predictions CSV (n x Q)")
    sub.add_parser("pho", parents=[common, data, model], help="orthogonalize the deep part")
    sub.add_parser("surfaces", parents=[common, model], help="export weight surfaces")
    sub.add_parser("bench", parents=[common], help="memory scaling benchmark")
    return parser


def _run(args):
    cfg = load_config(args.config, args.overrides or (), args.seed)
    if args.memory_budget is None:
        from .pho import DEFAULT_MEMORY_BUDGET
        args.memory_budget = DEFAULT_MEMORY_BUDGET
    out = Path(args.out_dir or "ssfr_out")
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {"command": args.command, **cfg})
    COMMANDS[args.command](args, cfg, out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                _run(args)
        else:
            _run(args)
    except (TrainingFailure, DegenerateDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidArgumentError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SSFRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
