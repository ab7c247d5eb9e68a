"""Command-line driver: simulate, fit, evaluate, explain.

Every verb reads an optional YAML run config (``--config``); command-line
flags override config values. All outputs go under ``--out``. Exit codes:
0 success, 2 configuration/input error, 3 computation failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
import time
from dataclasses import dataclass, field

import yaml

from .data import (
    DatasetError,
    FeatureGroup,
    NoEventsError,
    load_dataset,
    make_time_grid,
    validate_groups,
    write_dataset,
)
from .explain import gpfi_t, ice_t, pdp_t, pfi_t, select_background, sfi_t, survshap_t
from .metrics import MetricError
from .models import ModelError, load_model, save_model
from .models.io import ModelFormatError
from .simulate import simulate_ph
from .workflow import MODEL_KINDS, cross_validate, fit_model

SCHEMA = "survtime-run/1"
EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int | None = None
    data: str | None = None
    time_col: str = "time"
    event_col: str = "event"
    model: dict = field(default_factory=lambda: {"kind": "coxph"})
    grid_strategy: str = "event-times"
    grid_m: int | None = None
    folds: int = 10
    repeats: int = 10
    metrics: list[str] = field(default_factory=lambda: ["cindex", "ibs", "iauc"])
    explain: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    out: str = "out"
    workers: int = 1

    @classmethod
    def from_mapping(cls, doc: dict) -> "RunConfig":
        schema = doc.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
        cfg = cls()
        data = doc.get("data") or {}
        if isinstance(data, str):
            data = {"path": data}
        cfg.data = data.get("path")
        cfg.time_col = data.get("time", cfg.time_col)
        cfg.event_col = data.get("event", cfg.event_col)
        if "model" in doc:
            model = doc["model"]
            cfg.model = {"kind": model} if isinstance(model, str) else dict(model)
        grid = doc.get("grid") or {}
        cfg.grid_strategy = grid.get("strategy", cfg.grid_strategy)
        cfg.grid_m = grid.get("m", cfg.grid_m)
        ev = doc.get("evaluate") or {}
        cfg.folds = ev.get("folds", cfg.folds)
        cfg.repeats = ev.get("repeats", cfg.repeats)
        cfg.metrics = list(ev.get("metrics", cfg.metrics))
        cfg.explain = dict(doc.get("explain") or {})
        cfg.simulate = dict(doc.get("simulate") or {})
        cfg.seed = doc.get("seed")
        cfg.out = doc.get("out", cfg.out)
        cfg.workers = doc.get("workers", cfg.workers)
        return cfg

    def require_seed(self, verb: str) -> int:
        if self.seed is None:
            raise ConfigError(f"'{verb}' is stochastic: --seed (or 'seed' in the config) is required")
        return int(self.seed)


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return RunConfig.from_mapping(doc)


def _parse_value(text: str):
    return yaml.safe_load(text)


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    simple = {
        "seed": "seed", "data": "data", "time_col": "time_col", "event_col": "event_col",
        "grid": "grid_strategy", "grid_m": "grid_m", "folds": "folds", "repeats": "repeats",
        "out": "out", "workers": "workers",
    }
    for arg, attr in simple.items():
        val = getattr(args, arg, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "metrics", None):
        cfg.metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    if getattr(args, "model", None):
        cfg.model = {"kind": args.model}
    for kv in getattr(args, "param", None) or []:
        if "=" not in kv:
            raise ConfigError(f"--param expects key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        cfg.model[k.strip()] = _parse_value(v)
    ex = cfg.explain
    for name in ("observation", "b", "n_samples", "estimator", "mode", "metric",
                 "background_cap", "groups", "model_file", "output"):
        val = getattr(args, name, None)
        if val is not None:
            ex[name] = val
    for name in ("ice", "pdp"):
        val = getattr(args, name, None)
        if val:
            ex[name] = list(val)
    if getattr(args, "pfi", None) is not None:
        ex["pfi"] = list(args.pfi) or True
    for flag in ("shap", "sfi", "gpfi", "svg"):
        if getattr(args, flag, False):
            ex[flag] = True
    sim = cfg.simulate
    for name in ("n", "censoring", "baseline_rate"):
        val = getattr(args, name, None)
        if val is not None:
            sim[name] = val
    if getattr(args, "beta", None):
        sim["beta"] = [float(b) for b in args.beta.split(",")]
    if getattr(args, "binary", None):
        sim["binary"] = [int(b) for b in args.binary.split(",")]
    return cfg


def _validate(cfg: RunConfig, verb: str) -> None:
    if cfg.workers is None or int(cfg.workers) < 1:
        raise ConfigError("workers must be >= 1")
    if verb in ("fit", "evaluate", "explain") and not cfg.data:
        raise ConfigError(f"'{verb}' needs a dataset (--data or data.path in the config)")
    if verb in ("fit", "evaluate"):
        kind = cfg.model.get("kind")
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if verb == "evaluate":
        if int(cfg.folds) < 2:
            raise ConfigError("cross-validation needs at least 2 folds")
        if int(cfg.repeats) < 1:
            raise ConfigError("repeats must be >= 1")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_data(cfg: RunConfig, encoding=None):
    if not os.path.exists(cfg.data):
        raise ConfigError(f"dataset not found: {cfg.data}")
    return load_dataset(cfg.data, cfg.time_col, cfg.event_col, encoding=encoding)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(name)).strip("_") or "feature"


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    seed = cfg.require_seed("simulate")
    sim = cfg.simulate
    ds = simulate_ph(
        n=int(sim.get("n", 1000)), beta=sim.get("beta", (1.0, -0.5)),
        censoring=float(sim.get("censoring", 0.2)),
        baseline_rate=float(sim.get("baseline_rate", 0.1)),
        binary=sim.get("binary", ()), seed=seed,
    )
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "simulated.csv")
    write_dataset(ds, path)
    _write_json(os.path.join(cfg.out, "simulation.json"), {
        "n": ds.n, "beta": [float(b) for b in sim.get("beta", (1.0, -0.5))],
        "target_censoring": float(sim.get("censoring", 0.2)),
        "realized_censoring": 1.0 - ds.n_events / ds.n,
        "baseline_rate": float(sim.get("baseline_rate", 0.1)), "seed": seed,
    })
    print(f"wrote {path} (n={ds.n}, events={ds.n_events})")
    return EXIT_OK


def _coefficient_tables(model, out_dir) -> None:
    rows = model.summary()
    cols = ["feature", "estimate", "std_error", "z", "p_value"]
    for fname, keep in (("coefficients.csv", lambda r: True),
                        ("coefficients_significant.csv", lambda r: r["p_value"] < 0.05)):
        with open(os.path.join(out_dir, fname), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                if keep(r):
                    w.writerow([r["feature"]] + [repr(r[c]) for c in cols[1:]])
    print(f"{'feature':<30} {'estimate':>18} {'p-value':>8}")
    for r in rows:
        if r["p_value"] < 0.05:
            est = f"{r['estimate']:.3f} ± {r['std_error']:.3f}"
            print(f"{r['feature']:<30} {est:>18} {r['p_value']:>8.3f}")


def cmd_fit(cfg: RunConfig) -> int:
    kind = cfg.model.get("kind")
    seed = cfg.require_seed("fit") if kind in ("forest", "random") else int(cfg.seed or 0)
    ds = _load_data(cfg)
    model = fit_model(cfg.model, ds, seed, int(cfg.workers))
    os.makedirs(cfg.out, exist_ok=True)
    save_model(model, os.path.join(cfg.out, "model.json"), ds.encoding)
    report = {"model": cfg.model, "seed": seed, "n": ds.n, "p": ds.p,
              "events": ds.n_events, "features": list(ds.feature_names)}
    if kind == "coxph":
        report["diagnostics"] = model.diagnostics.to_dict()
        report["coefficients"] = model.summary()
        _coefficient_tables(model, cfg.out)
    _write_json(os.path.join(cfg.out, "fit_report.json"), report)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, record_time: bool = False) -> int:
    seed = cfg.require_seed("evaluate")
    ds = _load_data(cfg)
    start = time.perf_counter()
    report = cross_validate(ds, cfg.model, int(cfg.folds), int(cfg.repeats), seed, cfg.metrics,
                            cfg.grid_strategy, cfg.grid_m, int(cfg.workers), record_time)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "evaluation.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    report.to_csv(os.path.join(cfg.out, "folds.csv"))
    for name, agg in report.aggregate().items():
        if agg["mean"] is None:
            print(f"{name}: undefined")
        else:
            sd = agg["std"] if agg["std"] is not None else float("nan")
            print(f"{name}: {agg['mean']:.3f} ± {sd:.3f} over {agg['n_folds']} folds")
    if report.skipped:
        print(f"skipped folds: {len(report.skipped)}", file=sys.stderr)
    print(f"elapsed {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return EXIT_OK


def _read_groups(spec, ds) -> list[FeatureGroup]:
    if isinstance(spec, str):
        if not os.path.exists(spec):
            raise ConfigError(f"groups file not found: {spec}")
        with open(spec, encoding="utf-8") as fh:
            spec = yaml.safe_load(fh)
    if not isinstance(spec, dict) or not spec:
        raise ConfigError("groups must map group names to lists of feature names")
    groups = []
    for name, feats in spec.items():
        try:
            idx = tuple(ds.feature_index(f) for f in feats)
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"group {name!r}: {exc}") from None
        groups.append(FeatureGroup(str(name), idx))
    try:
        return validate_groups(groups, ds.p)
    except (IndexError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_explain(cfg: RunConfig) -> int:
    seed = cfg.require_seed("explain")
    ex = cfg.explain
    model_file = ex.get("model_file")
    if not model_file or not os.path.exists(model_file):
        raise ConfigError(f"model file not found: {model_file!r} (use --model-file)")
    try:
        model, encoding = load_model(model_file)
    except ModelFormatError as exc:
        raise ConfigError(str(exc)) from exc
    ds = _load_data(cfg, encoding)
    workers = int(cfg.workers)

    def check(names):
        for f in names:
            try:
                ds.feature_index(f)
            except (KeyError, IndexError) as exc:
                raise ConfigError(f"unknown feature {f!r}") from exc
        return names

    ice_feats = check(list(ex.get("ice") or []))
    pdp_feats = check(list(ex.get("pdp") or []))
    pfi_spec = ex.get("pfi")
    pfi_feats = None if pfi_spec in (None, False, True) else check(list(pfi_spec))
    if ex.get("gpfi") and not ex.get("groups"):
        raise ConfigError("gpfi needs a groups file (--groups or explain.groups)")
    groups = _read_groups(ex["groups"], ds) if ex.get("gpfi") else None
    obs = int(ex.get("observation", 0))
    if (ice_feats or ex.get("shap")) and not 0 <= obs < ds.n:
        raise ConfigError(f"observation {obs} out of range for n={ds.n}")

    grid = make_time_grid(ds, cfg.grid_strategy, cfg.grid_m)
    output = ex.get("output", "survival")
    b = int(ex.get("b", 10))
    n_samples = int(ex.get("n_samples", 1000))
    estimator = ex.get("estimator", "auto")
    mode = ex.get("mode", "absolute-difference")
    metric = ex.get("metric", "brier")
    cap = int(ex.get("background_cap", 100))
    base_prov = {"model_id": _sha256(model_file)[:16], "dataset_id": _sha256(cfg.data)[:16],
                 "seed": seed}

    results = []
    for f in ice_feats:
        cs = ice_t(model, ds.features[obs], f, grid=grid, ds=ds, output=output,
                   observation_id=obs)
        results.append((f"ice_{_slug(f)}_obs{obs}", cs))
    for f in pdp_feats:
        results.append((f"pdp_{_slug(f)}", pdp_t(model, ds, f, grid=grid, output=output)))
    if ex.get("shap"):
        bg = select_background(ds, cap, seed)
        attr = survshap_t(model, ds.features[obs], bg, grid, estimator, n_samples, seed,
                          output, ds.feature_names, obs)
        results.append((f"shap_obs{obs}", attr.as_curve_set({"background_rows": len(bg)})))
    if ex.get("sfi"):
        results.append(("sfi", sfi_t(model, ds, grid, estimator, n_samples, seed,
                                     background_cap=cap, output=output, n_jobs=workers)))
    if pfi_spec:
        results.append(("pfi", pfi_t(model, ds, pfi_feats, grid, metric, b, seed, mode,
                                     output, n_jobs=workers)))
    if groups:
        results.append(("gpfi", gpfi_t(model, ds, groups, grid, metric, b, seed, mode,
                                       output, n_jobs=workers)))
    if not results:
        raise ConfigError("nothing to explain: request at least one of "
                          "--ice, --pdp, --shap, --sfi, --pfi, --gpfi")

    os.makedirs(cfg.out, exist_ok=True)
    manifest = []
    for stem, cs in results:
        cs.provenance.update(base_prov)
        files = [f"{stem}.csv", f"{stem}.json"]
        cs.to_csv(os.path.join(cfg.out, files[0]))
        with open(os.path.join(cfg.out, files[1]), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(cs.to_json())
        if ex.get("svg"):
            files.append(f"{stem}.svg")
            cs.to_svg(os.path.join(cfg.out, files[2]), title=stem)
        manifest.append({
            "name": stem, "kind": cs.kind, "curves": cs.names,
            "files": {fn: _sha256(os.path.join(cfg.out, fn)) for fn in files},
            "provenance": cs.provenance,
        })
    _write_json(os.path.join(cfg.out, "manifest.json"),
                {"schema": SCHEMA, "grid_points": len(grid), "artifacts": manifest})
    print(f"wrote {len(results)} curve sets to {cfg.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, data=True):
    p.add_argument("--config", help="YAML run config; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="parallel workers (results do not depend on it)")
    if data:
        p.add_argument("--data", help="CSV with a header row")
        p.add_argument("--time-col", dest="time_col")
        p.add_argument("--event-col", dest="event_col")
        p.add_argument("--grid", choices=["event-times", "quantiles"])
        p.add_argument("--grid-m", dest="grid_m", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survtime", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="write a proportional-hazards dataset")
    _common(p, data=False)
    p.add_argument("--n", type=int)
    p.add_argument("--beta", help="comma-separated coefficients, e.g. 1.0,-0.5")
    p.add_argument("--censoring", type=float, help="target censored fraction")
    p.add_argument("--baseline-rate", dest="baseline_rate", type=float)
    p.add_argument("--binary", help="comma-separated indices of binary features")

    for verb, help_ in (("fit", "fit a model and write model.json"),
                        ("evaluate", "repeated stratified k-fold cross-validation")):
        p = sub.add_parser(verb, help=help_)
        _common(p)
        p.add_argument("--model", choices=MODEL_KINDS)
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="model hyperparameter, repeatable")
        if verb == "evaluate":
            p.add_argument("--folds", type=int)
            p.add_argument("--repeats", type=int)
            p.add_argument("--metrics", help="comma-separated: cindex,ibs,iauc")
            p.add_argument("--record-time", action="store_true",
                           help="store wall-clock time in the report (breaks byte-identity)")

    p = sub.add_parser("explain", help="time-dependent explanations of a fitted model")
    _common(p)
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--observation", type=int)
    p.add_argument("--ice", action="append", metavar="FEATURE")
    p.add_argument("--pdp", action="append", metavar="FEATURE")
    p.add_argument("--shap", action="store_true")
    p.add_argument("--sfi", action="store_true")
    p.add_argument("--pfi", nargs="*", metavar="FEATURE", help="features (default: all)")
    p.add_argument("--gpfi", action="store_true")
    p.add_argument("--groups", help="YAML/JSON file mapping group name -> feature names")
    p.add_argument("--b", type=int, help="permutations per feature or group")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--estimator", choices=["auto", "exact", "sampling"])
    p.add_argument("--mode", choices=["difference", "relative", "absolute-difference"])
    p.add_argument("--metric", choices=["brier", "auc"])
    p.add_argument("--output", choices=["survival", "cumhazard"])
    p.add_argument("--background-cap", dest="background_cap", type=int)
    p.add_argument("--svg", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(_load_config(args.config), args)
        _validate(cfg, args.verb)
        if args.verb == "simulate":
            return cmd_simulate(cfg)
        if args.verb == "fit":
            return cmd_fit(cfg)
        if args.verb == "evaluate":
            return cmd_evaluate(cfg, args.record_time)
        return cmd_explain(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoEventsError, ModelError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except DatasetError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
