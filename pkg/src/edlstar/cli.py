"""Command-line driver.

Subcommands::

    edlstar gen     --config gen.json --out DIR          synthetic dataset
    edlstar train   --config exp.json --out DIR          model.json + trace.csv
    edlstar eval    --config exp.json --model M --out DIR  report.json + curves/
    edlstar run     --config exp.json --out DIR [--seeds N]  train + eval
    edlstar sweep   --config exp.json --axis lambda --values 0.2,0.8 --out DIR
    edlstar compare REPORT [REPORT ...] [--out table.csv]

Failures print one JSON line ``{"error": <type>, "message": <text>}`` to
stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from .annotations import save_dataset, split_ma_nma
from .datagen import GenConfig, generate, write_generated
from .experiment import (
    ConfigError,
    ExperimentConfig,
    evaluate,
    load_trained,
    prepare_splits,
    run_experiment,
    save_trained,
    train_method,
)
from .metrics import MetricsReport
from .network import EVIDENCE_ACTIVATIONS

__all__ = ["main", "build_parser"]

ACTIVATION_ALIASES = {
    "relu": "relu_evidence",
    "softplus": "softplus_evidence",
    "exp": "exp_evidence",
}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = args.out or (cfg.output_dir if cfg is not None else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir in the config")
    return Path(out)


def _summary(report: MetricsReport) -> str:
    parts = []
    for key in MetricsReport.SCALAR_KEYS:
        v = report.scalars.get(key)
        parts.append(f"{key}={'n/a' if v is None else f'{v:.4f}'}")
    return " ".join(parts)


# -- gen ----------------------------------------------------------------------


def _gen_config(path: str | None) -> GenConfig:
    if path is None:
        return GenConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if isinstance(doc, dict) and isinstance(doc.get("data"), dict):
        doc = doc["data"].get("generator")
    elif isinstance(doc, dict) and "generator" in doc:
        doc = doc["generator"]
    if not isinstance(doc, dict):
        raise ConfigError("generator config must be a JSON object")
    try:
        return GenConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"generator config: {exc}") from None


def cmd_gen(args) -> int:
    cfg = _gen_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args)
    data = generate(cfg)
    data_path, eta_path = write_generated(data, out, args.name)
    if args.format == "csv":
        data_path.unlink()
        data_path = out / f"{args.name}.csv"
        save_dataset(data.dataset, data_path, "csv")
    _write_json(out / f"{args.name}.config.json", cfg.to_dict())
    ma, nma = split_ma_nma(data.dataset)
    print(f"wrote {len(data.dataset)} examples (MA {len(ma)}, NMA {len(nma)}) to {data_path}")
    print(f"ground-truth distributions: {eta_path}")
    return 0


# -- train / eval / run ---------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    out = _out_dir(args, cfg)
    splits = prepare_splits(cfg.data)
    tm = train_method(cfg, splits, cfg.seed)
    save_trained(tm, out)
    _write_json(out / "config.json", cfg.to_dict())
    last = tm.trace[-1]["train_loss"] if tm.trace else None
    msg = f"trained {cfg.method.value} (seed {cfg.seed}) -> {out / 'model.json'}"
    print(msg if last is None else f"{msg}; final train loss {last:.4f}")
    return 0


def _model_file(path: str) -> Path:
    p = Path(path)
    return p / "model.json" if p.is_dir() else p


def cmd_eval(args) -> int:
    cfg = _load_experiment(args)
    out = _out_dir(args, cfg)
    tm = load_trained(_model_file(args.model))
    head = tm.models[0].config
    # the model file decides method and head; the config supplies data and eval options
    cfg = replace(cfg, method=tm.method, output_activation=head.output_activation,
                  dropout_rate=head.dropout_rate)
    splits = prepare_splits(cfg.data)
    report = evaluate(tm, splits, cfg, cfg.seed)
    report.write(out)
    print(_summary(report))
    return 0


def cmd_run(args) -> int:
    cfg = _load_experiment(args)
    out = _out_dir(args, cfg)
    agg, _ = run_experiment(cfg, args.seeds, out)
    _write_json(out / "config.json", cfg.to_dict())
    print(_summary(agg))
    return 0


# -- sweep ----------------------------------------------------------------------


def _sweep_values(axis: str, raw: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ConfigError("sweep needs at least one value")
    if axis == "lambda":
        try:
            return [float(v) for v in items]
        except ValueError as exc:
            raise ConfigError(f"lambda values must be numbers: {exc}") from None
    values = [ACTIVATION_ALIASES.get(v, v) for v in items]
    for v in values:
        if v not in EVIDENCE_ACTIVATIONS:
            raise ConfigError(f"unknown evidence activation {v!r}; expected one of "
                              f"{sorted(ACTIVATION_ALIASES)} or {list(EVIDENCE_ACTIVATIONS)}")
    return values


def cmd_sweep(args) -> int:
    base = _load_experiment(args)
    out = _out_dir(args, base)
    values = _sweep_values(args.axis, args.values)
    field_name = "lam" if args.axis == "lambda" else "output_activation"
    configs = [replace(base, **{field_name: v}) for v in values]

    splits = prepare_splits(base.data)
    score_rows, ecdf_rows = [], []
    for value, cfg in zip(values, configs):
        run_dir = out / f"{args.axis}={value}"
        agg, reports = run_experiment(cfg, args.seeds, run_dir, splits=splits)
        _write_json(run_dir / "config.json", cfg.to_dict())
        for metric, score in agg.scalars.items():
            score_rows.append([args.axis, value, metric, "" if score is None else repr(float(score))])
        for seed, rep in zip(agg.meta.get("seeds", [cfg.seed]), reports):
            for series in ("ecdf_uncertainty", "ecdf_entropy"):
                for pt in rep.curves.get(series, []):
                    ecdf_rows.append([args.axis, value, seed, series, repr(pt["x"]), repr(pt["y"])])
        print(f"{args.axis}={value}: {_summary(agg)}")

    _write_csv(out / "sweep.csv", ["axis", "value", "metric", "score"], score_rows)
    _write_csv(out / "sweep_ecdf.csv", ["axis", "value", "seed", "series", "x", "y"], ecdf_rows)
    return 0


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- compare --------------------------------------------------------------------


def _read_report(path: str) -> MetricsReport:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {p}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: report must be a JSON object")
    try:
        return MetricsReport.from_dict(doc)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from None


def compare_table(paths: list[str]) -> str:
    """CSV text with one row per report and a stable column order."""
    if len(paths) < 2:
        raise ConfigError("compare needs at least two reports")
    reports = [_read_report(p) for p in paths]
    keys = set(reports[0].scalars)
    for path, rep in zip(paths[1:], reports[1:]):
        if set(rep.scalars) != keys:
            diff = sorted(keys.symmetric_difference(rep.scalars))
            raise ConfigError(f"metric keys of {path} differ from {paths[0]}: {diff}")
    fixed = [k for k in MetricsReport.SCALAR_KEYS if k in keys]
    columns = fixed + sorted(keys - set(fixed))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["report", "method", *columns])
    for path, rep in zip(paths, reports):
        cells = []
        for key in columns:
            v = rep.scalars[key]
            cells.append("" if v is None else repr(float(v)))
        w.writerow([path, rep.meta.get("method", ""), *cells])
    return buf.getvalue()


def cmd_compare(args) -> int:
    table = compare_table(args.reports)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return 0


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edlstar",
        description="Evidential classifiers and distribution estimators for ambiguous labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p, config_required=False)
    p.add_argument("--name", default="dataset", help="file stem (default: dataset)")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one method and save the model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    common(p)
    p.add_argument("--model", required=True, help="model.json or a directory holding it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="train and evaluate, optionally over several seeds")
    common(p)
    p.add_argument("--seeds", type=int, default=1, help="number of seeds (default: 1)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep lambda or the evidence activation")
    common(p)
    p.add_argument("--axis", choices=("lambda", "activation"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="tabulate several reports side by side")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seeds", 1) < 1:
        return _fail(ConfigError("--seeds must be >= 1"))
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        return _fail(exc)


def _fail(exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
