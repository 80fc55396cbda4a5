"""Command-line entry point: ingest, synth, train, grid, eval, explain."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import date, datetime
from pathlib import Path
from typing import Any

from . import evaluation as ev
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (PanelDataset, SplitSpec, build_panel, ingest_incidents, load_centroids, load_static,
                   make_samples)
from .data.samples import SampleSplits
from .errors import CastnetError, ConfigError, FingerprintMismatch
from .model import ModelConfig
from .synthetic import SynthSpec, generate
from .training import TrainConfig, grid_search, k_sweep_rows, predict_set, train

OUT_ENV = "CASTNET_OUT"
log = logging.getLogger("castnet")

ABLATIONS = ("no_gl", "no_ortho", "no_sa", "no_ta", "no_ca", "no_sc")


def canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


def run_dir(root: str | None, command: str, run_config: dict[str, Any]) -> Path:
    root = Path(root or os.environ.get(OUT_ENV) or "runs")
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    path = root / f"{command}-{stamp}-{config_hash(run_config)[:10]}"
    suffix = 1
    while path.exists():
        suffix += 1
        path = root / f"{command}-{stamp}-{config_hash(run_config)[:10]}-{suffix}"
    path.mkdir(parents=True)
    return path


def write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- run configuration ------------------------------------------------------------

def load_config_file(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def train_config(args: argparse.Namespace, file_cfg: dict[str, Any]) -> TrainConfig:
    """File values first, then command-line overrides."""
    opts = dict(file_cfg.get("train", {}))
    overrides = {"seed": args.seed, "K": args.k, "w": args.window, "lam": args.lam, "eta": args.eta,
                 "epochs": getattr(args, "epochs", None)}
    opts.update({k: v for k, v in overrides.items() if v is not None})
    for flag in ABLATIONS:
        if getattr(args, flag, False):
            opts[flag] = True
    return TrainConfig.from_dict(opts)


def split_spec(file_cfg: dict[str, Any]) -> SplitSpec:
    return SplitSpec(**file_cfg.get("split", {}))


def samples_for(panel: PanelDataset, cfg: TrainConfig, split: SplitSpec) -> SampleSplits:
    return make_samples(panel, cfg.w, cfg.tau, split)


def load_panel(path: str) -> PanelDataset:
    return PanelDataset.load(path)


def check_fingerprint(panel: PanelDataset, meta: dict[str, Any], what: str) -> None:
    expected = meta.get("data_fingerprint")
    actual = panel.fingerprint()
    if expected != actual:
        raise FingerprintMismatch(f"{what} was built against panel {str(expected)[:12]}, "
                                  f"supplied panel is {actual[:12]}")


def load_model(path: str, panel: PanelDataset):
    params, meta = load_checkpoint(path)
    check_fingerprint(panel, meta, "checkpoint")
    cfg = TrainConfig.from_dict(meta["train_config"])
    mcfg = ModelConfig(**meta["model_config"])
    return params, cfg, mcfg, SplitSpec(**meta["split"]), meta


# -- commands -------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> Path:
    centroids = load_centroids(args.centroids)
    records, reports = [], {}
    for path in args.crimes:
        recs, rep = ingest_incidents(path, args.schema)
        records += recs
        reports[str(path)] = rep.to_dict()
    od_records, od_rep = ingest_incidents(args.overdoses, args.overdose_schema or args.schema,
                                          default_category="OPIOID OVERDOSE")
    reports[str(args.overdoses)] = od_rep.to_dict()
    static = load_static(args.static, centroids) if args.static else None
    bbox = tuple(args.bbox) if args.bbox else None
    week0 = date.fromisoformat(args.week0)
    panel, build = build_panel(records, od_records, centroids, week0, n_weeks=args.weeks,
                               rare_threshold=args.rare_threshold, static=static, bbox=bbox, unit=args.unit)
    if args.neighborhoods:
        # assign against every centroid first so excluded areas do not leak into kept ones
        panel = panel.select(args.neighborhoods)
    run_cfg = {"command": "ingest", "crimes": [str(p) for p in args.crimes], "overdoses": str(args.overdoses),
               "schema": args.schema, "overdose_schema": args.overdose_schema, "centroids": str(args.centroids),
               "neighborhoods": args.neighborhoods, "static": args.static, "week0": args.week0, "weeks": args.weeks,
               "rare_threshold": args.rare_threshold, "bbox": args.bbox, "unit": args.unit}
    out = run_dir(args.out, "ingest", run_cfg)
    panel.save(out / "panel.npz")
    write_json(out / "ingest_report.json", {"config": run_cfg, "config_fingerprint": config_hash(run_cfg),
                                            "data_fingerprint": panel.fingerprint(), "files": reports,
                                            "build": build, "n_dynamic": panel.n,
                                            "dynamic_features": panel.dynamic_features})
    return out


def cmd_synth(args: argparse.Namespace) -> Path:
    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    spec = spec.resolved()
    panel, truth = generate(spec)
    run_cfg = {"command": "synth", "spec": spec.to_dict()}
    out = run_dir(args.out, "synth", run_cfg)
    panel.save(out / "panel.npz")
    write_json(out / "synth_spec.json", spec.to_dict())
    write_json(out / "ground_truth.json", {"data_fingerprint": panel.fingerprint(),
                                          "config_fingerprint": config_hash(run_cfg), **truth.to_dict()})
    return out


def _train_documents(panel: PanelDataset, cfg: TrainConfig, split: SplitSpec):
    splits = samples_for(panel, cfg, split)
    result = train(splits.train, splits.val, cfg)
    result.report.panel_fingerprint = panel.fingerprint()
    run_cfg = {"command": "train", "train": cfg.to_dict(), "split": dict(split.__dict__),
               "data_fingerprint": panel.fingerprint()}
    meta = {"train_config": cfg.to_dict(), "model_config": result.model_config.to_dict(),
            "split": dict(split.__dict__), "data_fingerprint": panel.fingerprint(),
            "config_fingerprint": config_hash(run_cfg), "standardization": splits.stats.to_dict()}
    report = {"config_fingerprint": meta["config_fingerprint"], **result.report.to_dict()}
    return run_cfg, result, meta, report


def cmd_train(args: argparse.Namespace) -> Path:
    file_cfg = load_config_file(args.config)
    panel = load_panel(args.panel)
    cfg = train_config(args, file_cfg)
    run_cfg, result, meta, report = _train_documents(panel, cfg, split_spec(file_cfg))
    out = run_dir(args.out, "train", run_cfg)
    save_checkpoint(out / "checkpoint.json", result.params, **meta)
    write_json(out / "train_report.json", report)
    ev.write_rows_csv(out / "loss_curve.csv", result.report.loss_curve_rows(),
                      ["epoch", "mse", "ortho", "gl", "val_mse"])
    return out


def cmd_grid(args: argparse.Namespace) -> Path:
    file_cfg = load_config_file(args.config)
    panel = load_panel(args.panel)
    base = train_config(args, file_cfg)
    space = {k: list(v) for k, v in file_cfg.get("space", {}).items()}
    if args.k_values:
        space["K"] = args.k_values
    split = split_spec(file_cfg)
    windows = space.pop("w", [base.w])
    entries = []
    for w in windows:
        cfg_w = replace(base, w=w)
        entries += grid_search(samples_for(panel, cfg_w, split), cfg_w, space)
    entries.sort(key=lambda e: e.val_mae)
    run_cfg = {"command": "grid", "base": base.to_dict(), "space": {**space, "w": windows},
               "split": split.__dict__}
    out = run_dir(args.out, "grid", run_cfg)
    ranked = [{"rank": i + 1, "config": e.config.to_dict(), "val_mae": e.val_mae if e.result else None,
               "best_epoch": e.result.report.best_epoch if e.result else None, "error": e.error}
              for i, e in enumerate(entries)]
    write_json(out / "grid_report.json", {"config_fingerprint": config_hash(run_cfg),
                                          "data_fingerprint": panel.fingerprint(), "ranked": ranked})
    ev.write_rows_csv(out / "k_sweep.csv", k_sweep_rows(entries), ["K", "val_mae", "val_rmse", "best_epoch"])
    return out


def cmd_eval(args: argparse.Namespace) -> Path:
    panel = load_panel(args.panel)
    params, cfg, mcfg, split, meta = load_model(args.checkpoint, panel)
    splits = samples_for(panel, cfg, split)
    target = splits.test if args.split == "test" else splits.val
    yhat = predict_set(params, mcfg, target)
    y = target.targets
    report = {
        "config_fingerprint": meta["config_fingerprint"], "data_fingerprint": meta["data_fingerprint"],
        "split": args.split,
        "model": ev.metrics_report(yhat, y, target.d, panel.L).to_dict(),
        "baselines": {
            "historical_average": ev.metrics_report(ev.predict_ha(splits.train, target), y, target.d,
                                                    panel.L).to_dict(),
            "persistence": ev.metrics_report(ev.predict_persistence(target), y, target.d, panel.L).to_dict(),
        },
    }
    out = run_dir(args.out, "eval", {"command": "eval", "checkpoint": meta["config_fingerprint"],
                                     "split": args.split})
    write_json(out / "metrics.json", report)
    ev.write_rows_csv(out / "predictions.csv",
                      [{"week": panel.week_starts[t + target.tau], "neighborhood": panel.neighborhoods[d],
                        "y": float(a), "yhat": float(b)} for t, d, a, b in zip(target.t, target.d, y, yhat)],
                      ["week", "neighborhood", "y", "yhat"])
    return out


def cmd_explain(args: argparse.Namespace) -> Path:
    panel = load_panel(args.panel)
    params, cfg, mcfg, split, meta = load_model(args.checkpoint, panel)
    splits = samples_for(panel, cfg, split)
    out = run_dir(args.out, "explain", {"command": "explain", "checkpoint": meta["config_fingerprint"]})
    names = ev.community_names(mcfg.K)
    if mcfg.K:
        membership, contribution = ev.explain(params, mcfg, splits.test)
        ev.write_matrix_csv(out / "memberships.csv", membership, names, panel.neighborhoods, "community")
        ev.write_matrix_csv(out / "contributions.csv", contribution, panel.neighborhoods, names, "neighborhood")
    imp = ev.export_feature_importance(params, mcfg, panel.dynamic_features, panel.static_features)
    ev.write_rows_csv(out / "feature_importance.csv", imp.rows(), ["component", "feature", "importance"])
    write_json(out / "explain_report.json", {"config_fingerprint": meta["config_fingerprint"],
                                             "data_fingerprint": meta["data_fingerprint"], "K": mcfg.K})
    return out


# -- argument parsing -----------------------------------------------------------

def _common(p: argparse.ArgumentParser, model_flags: bool = False) -> None:
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    if model_flags:
        p.add_argument("--k", type=int, help="number of community blocks")
        p.add_argument("--window", type=int, help="observation window in weeks")
        p.add_argument("--lambda", dest="lam", type=float, help="orthogonality weight")
        p.add_argument("--eta", type=float, help="group lasso weight")
        p.add_argument("--epochs", type=int)
        for flag in ABLATIONS:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="castnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="incident CSVs -> weekly panel archive")
    _common(p)
    p.add_argument("--crimes", nargs="+", required=True)
    p.add_argument("--overdoses", required=True)
    p.add_argument("--schema", required=True, help="preset name or JSON schema map for the crime files")
    p.add_argument("--overdose-schema")
    p.add_argument("--centroids", required=True)
    p.add_argument("--neighborhoods", nargs="+", help="keep only these neighborhoods (ids or names), in this order")
    p.add_argument("--static")
    p.add_argument("--week0", required=True, help="first Monday, YYYY-MM-DD")
    p.add_argument("--weeks", type=int)
    p.add_argument("--rare-threshold", type=float, default=0.01)
    p.add_argument("--bbox", type=float, nargs=4, metavar=("LAT_MIN", "LAT_MAX", "LON_MIN", "LON_MAX"))
    p.add_argument("--unit", default="km")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="synthetic panel with planted communities")
    _common(p)
    p.add_argument("--spec", help="JSON generator spec")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (("train", cmd_train, "fit one model"),
                              ("grid", cmd_grid, "grid search and K sweep")):
        p = sub.add_parser(name, help=help_)
        _common(p, model_flags=True)
        p.add_argument("--panel", required=True)
        if name == "grid":
            p.add_argument("--k-values", type=int, nargs="+", help="K values to sweep (e.g. 0 1 2 3 4 5 6)")
        p.set_defaults(func=func)

    for name, func, help_ in (("eval", cmd_eval, "metrics and baselines for a checkpoint"),
                              ("explain", cmd_explain, "attention and feature-importance exports")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out")
        p.add_argument("--panel", required=True)
        p.add_argument("--checkpoint", required=True)
        if name == "eval":
            p.add_argument("--split", choices=("test", "val"), default="test")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        out = args.func(args)
    except (CastnetError, OSError, ValueError, KeyError) as exc:
        message = " ".join(str(exc).split())
        print(f"castnet: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
