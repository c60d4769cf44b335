"""Command-line front end.

    palm run --dataset mackey-glass --order type2 --learning global --out runs/mg
    palm suite synthetic --out runs/suite
    palm sweep --dataset box-jenkins --b2 0.052 0.053 0.054 0.055
    palm gen mackey-glass --out mg.csv
    palm inspect runs/mg/model.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import datastreams, metrics
from .datastreams import DatasetError, DatasetSpec
from .engine import ConfigError, ModelConfig, Palm, SnapshotError
from .inference import IntervalHyperplane, NumericDomainError

RUN_CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_NUMERIC = 4

MODEL_FLAGS = ("order", "learning", "gamma", "b1", "b2", "c1", "c2", "beta", "lr")


class RunConfigError(ConfigError):
    pass


def load_run_config(path) -> dict:
    """Versioned JSON run configuration: ``{"version", "dataset", "model", "out"}``."""
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RunConfigError(f"cannot read run config {path}: {exc}") from None
    if cfg.get("version") != RUN_CONFIG_VERSION:
        raise RunConfigError(f"run config version must be {RUN_CONFIG_VERSION}, got {cfg.get('version')!r}")
    unknown = set(cfg) - {"version", "dataset", "model", "out", "csv", "standin"}
    if unknown:
        raise RunConfigError(f"unknown run config field(s): {sorted(unknown)}")
    if isinstance(cfg.get("dataset"), dict):
        spec = DatasetSpec.from_dict(cfg["dataset"])
        if spec.path and not Path(spec.path).is_absolute():
            spec.path = str(Path(path).parent / spec.path)
        cfg["dataset"] = spec
    return cfg


def resolve_dataset(dataset, csv: Optional[str] = None, standin: bool = False):
    if isinstance(dataset, DatasetSpec):
        if dataset.path is None and csv is None:
            raise DatasetError(f"{dataset.name}: spec has no CSV path")
        return datastreams.load_csv_stream(csv or dataset.path, dataset)
    if dataset is None:
        raise DatasetError("no dataset given (use --dataset or a config file)")
    if str(dataset).endswith(".json"):
        return resolve_dataset(DatasetSpec.from_json(dataset), csv, standin)
    if dataset == "mackey-glass":
        return datastreams.gen_mackey_glass()
    if dataset == "nonlinear-sysid":
        return datastreams.gen_nonlinear_sysid()
    return datastreams.load_real_world(dataset, csv, standin=standin)


def _model_config(args, file_cfg: dict, dataset_name: str) -> ModelConfig:
    order = args.order or file_cfg.get("model", {}).get("order", "type1")
    learning = args.learning or file_cfg.get("model", {}).get("learning", "local")
    base = metrics.config_for(dataset_name, order, learning).to_dict()
    base.update(file_cfg.get("model", {}))
    for name in MODEL_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    if getattr(args, "recurrent", False):
        base["recurrent"] = True
    return ModelConfig.from_dict(base)


def _dataset_name(dataset) -> str:
    if isinstance(dataset, DatasetSpec):
        return dataset.name
    return str(dataset)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    file_cfg = load_run_config(args.config) if args.config else {}
    dataset_ref = args.dataset or file_cfg.get("dataset")
    ds = resolve_dataset(dataset_ref, args.csv or file_cfg.get("csv"), args.standin or file_cfg.get("standin", False))
    cfg = _model_config(args, file_cfg, _dataset_name(dataset_ref))
    if cfg.recurrent and not cfg.feedback_slots:
        if not ds.feedback_slots:
            raise ConfigError(f"recurrent: dataset {ds.name} has no lagged-output input slot to feed back")
        cfg.feedback_slots = tuple(ds.feedback_slots)
    cfg.validate(force=args.force)
    result = metrics.run_experiment(ds, cfg, force=args.force)
    out = Path(args.out or file_cfg.get("out") or "palm-run")
    metrics.write_outputs(result, out, plots=not args.no_plots)
    (out / "model.json").write_text(result.model.snapshot())
    print(result.report.summary())
    return EXIT_OK


def _parse_csv_map(items: Optional[List[str]]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise RunConfigError(f"--csv expects name=path, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def cmd_suite(args) -> int:
    res = metrics.experiment_suite(args.suite, out_dir=args.out, workers=args.workers, standin=args.standin,
                                   paths=_parse_csv_map(args.csv), plots=not args.no_plots)
    for r in res.reports:
        print(r.summary())
    for name in res.skipped:
        print(f"skipped {name}: dataset unavailable", file=sys.stderr)
    return EXIT_OK if res.complete else EXIT_DATASET


def cmd_sweep(args) -> int:
    ds = resolve_dataset(args.dataset, args.csv, args.standin)
    order = args.order or "type2"
    learning = args.learning or "global"
    base = metrics.config_for(args.dataset, order, learning, **{k: getattr(args, k) for k in MODEL_FLAGS
                                                                 if k not in ("order", "learning")})
    base.validate(force=args.force)
    rows = metrics.sensitivity_sweep(ds, base, args.b1_grid or (), args.b2_grid or (), args.workers, args.force)
    print(metrics.format_sweep(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w") as fh:
            fh.write("b1,b2,nrmse,ndei,exec_time,rules\n")
            for r in rows:
                fh.write(f"{r.b1!r},{r.b2!r},{r.nrmse!r},{r.ndei!r},{r.exec_time!r},{r.rules}\n")
    return EXIT_OK


def cmd_gen(args) -> int:
    ds = resolve_dataset(args.dataset, args.csv, args.standin)
    out = args.out or f"{ds.name}.csv"
    ds.write_csv(out)
    print(f"{ds.name}: {len(ds.y_train)} train + {len(ds.y_test)} test rows -> {out}")
    return EXIT_OK


def format_rule_table(model: Palm) -> str:
    """One line per rule: weights then support; type-2 rules print both bounds."""
    lines = []
    for j, r in enumerate(model.rb.rules, start=1):
        if isinstance(r, IntervalHyperplane):
            lo = " ".join(f"{v:.6g}" for v in r.omega_lower)
            up = " ".join(f"{v:.6g}" for v in r.omega_upper)
            lines.append(f"R{j}: lower [{lo}] upper [{up}] support {r.support}")
        else:
            lines.append(" ".join(f"{v:.6g}" for v in r.omega) + f" {r.support}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    model = Palm.restore(Path(args.snapshot).read_text())
    c = model.config
    print(f"# {c.order}/{c.learning}, {model.n_rules} rule(s), {model.param_count()} parameters", file=sys.stderr)
    print(format_rule_table(model))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _floats(s):
    return float(s)


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--order", choices=("type1", "type2"))
    p.add_argument("--learning", choices=("local", "global"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--b1", type=float)
    p.add_argument("--b2", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lr", type=float, help="q-factor learning rate")
    p.add_argument("--force", action="store_true", help="accept hyperparameters outside the documented ranges")


def _add_data_flags(p: argparse.ArgumentParser, required: bool = False):
    p.add_argument("--dataset", required=required,
                   help="built-in name (mackey-glass, nonlinear-sysid, box-jenkins, helicopter, quadcopter, "
                        "sp500) or a DatasetSpec JSON file")
    p.add_argument("--csv", help="CSV file for a real-world dataset")
    p.add_argument("--standin", action="store_true", help="use the seeded synthetic stand-in of a real dataset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="palm", description="Evolving hyperplane fuzzy regressor")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train and test one configuration")
    p.add_argument("--config", help="JSON run config (flags override its values)")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--recurrent", action="store_true")
    p.add_argument("--out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="all four configurations on every dataset of a suite")
    p.add_argument("suite", choices=sorted(metrics.SUITES))
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--standin", action="store_true")
    p.add_argument("--csv", nargs="*", metavar="NAME=PATH")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("sweep", help="rule-growth threshold sensitivity")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--b1-grid", nargs="*", type=_floats)
    p.add_argument("--b2-grid", nargs="*", type=_floats)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep, dataset="box-jenkins")

    p = sub.add_parser("gen", help="write a lag-structured dataset as CSV")
    p.add_argument("dataset")
    p.add_argument("--csv")
    p.add_argument("--standin", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("inspect", help="print the rule table of a model snapshot")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (NumericDomainError, FloatingPointError, metrics.MetricError) as exc:
        print(f"error: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
