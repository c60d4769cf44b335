"""Error metrics, experiment runs, threshold sweeps and suites."""

from __future__ import annotations

import concurrent.futures as cf
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .datastreams import (
    Dataset,
    DatasetError,
    gen_mackey_glass,
    gen_nonlinear_sysid,
    load_real_world,
)
from .engine import ModelConfig, Palm, RunTrace
from .inference import PalmError

log = logging.getLogger(__name__)

CONFIGS = (("type1", "local"), ("type1", "global"), ("type2", "local"), ("type2", "global"))


class MetricError(PalmError, ValueError):
    pass


@dataclass
class ErrorMetrics:
    mse: float
    rmse: float
    ndei: float
    nrmse: float
    target_std: float


def compute_metrics(predictions: Sequence[float], targets: Sequence[float]) -> ErrorMetrics:
    """MSE, RMSE, NDEI = RMSE / std and NRMSE = sqrt(MSE / std).

    ``std`` is the population standard deviation of the targets.  NRMSE
    divides the MSE by the standard deviation itself, not the variance.
    """
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise MetricError(f"predictions {p.shape} and targets {t.shape} must be equal-length 1-D")
    if p.size == 0:
        raise MetricError("no samples to score")
    std = float(np.std(t))
    if std == 0.0:
        raise MetricError("targets have zero variance: NDEI is undefined")
    mse = float(np.mean((t - p) ** 2))
    rmse = float(np.sqrt(mse))
    return ErrorMetrics(mse, rmse, rmse / std, float(np.sqrt(mse / std)), std)


@dataclass
class MetricReport:
    dataset: str
    order: str
    learning: str
    mse: float
    rmse: float
    ndei: float
    nrmse: float
    rule_count: int
    param_count: int
    train_samples: int
    test_samples: int
    exec_time: float
    recurrent: bool = False
    config: Dict = field(default_factory=dict)
    trace_path: Optional[str] = None

    @property
    def label(self) -> str:
        kind = "Type-1" if self.order == "type1" else "Type-2"
        mode = "L" if self.learning == "local" else "G"
        return f"{kind} PALM ({mode}){' recurrent' if self.recurrent else ''}"

    def summary(self) -> str:
        return (f"{self.dataset:<16} {self.label:<18} RMSE={self.rmse:.4f} NDEI={self.ndei:.4f} "
                f"rules={self.rule_count} params={self.param_count} time={self.exec_time:.2f}s")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls.from_dict(json.loads(text))


@dataclass
class ExperimentResult:
    report: MetricReport
    model: Palm
    train_trace: RunTrace
    test_trace: RunTrace


def run_experiment(dataset: Dataset, config: ModelConfig, force: bool = False) -> ExperimentResult:
    """Train on the training block in one pass, then score the frozen model on the test block."""
    if config.recurrent and not config.feedback_slots:
        config = ModelConfig.from_dict({**config.to_dict(), "feedback_slots": list(dataset.feedback_slots)})
    model = Palm(config, force=force)
    train_trace = model.train(dataset.train_stream())
    test_trace = model.predict(dataset.test_stream())
    y_hat, y_d = test_trace.scored()
    m = compute_metrics(y_hat, y_d)
    report = MetricReport(
        dataset=dataset.name, order=config.order, learning=config.learning,
        mse=m.mse, rmse=m.rmse, ndei=m.ndei, nrmse=m.nrmse,
        rule_count=model.n_rules, param_count=model.param_count(),
        train_samples=len(train_trace), test_samples=len(test_trace),
        exec_time=train_trace.wall_time, recurrent=config.recurrent, config=config.to_dict(),
    )
    return ExperimentResult(report, model, train_trace, test_trace)


def write_outputs(result: ExperimentResult, out_dir, stem: str = "", plots: bool = False) -> Dict[str, Path]:
    """Write ``report.json`` and ``trace.csv`` (train then test rows) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{stem}-" if stem else ""
    trace_path = out / f"{prefix}trace.csv"
    combined = RunTrace(result.train_trace.records + result.test_trace.records)
    combined.write_csv(trace_path)
    result.report.trace_path = trace_path.name
    report_path = out / f"{prefix}report.json"
    report_path.write_text(result.report.to_json())
    paths = {"report": report_path, "trace": trace_path}
    if plots:
        from .plotting import plot_run

        paths.update(plot_run(result, out, prefix))
    return paths


# ---------------------------------------------------------------------------
# hyperparameters
# ---------------------------------------------------------------------------

def load_hyperparameters(path=None) -> dict:
    """Per-dataset, per-configuration thresholds (the checked-in ledger by default)."""
    if path is None:
        text = resources.files("palm").joinpath("hyperparams.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def config_for(dataset: str, order: str, learning: str, table: Optional[dict] = None, **overrides) -> ModelConfig:
    table = load_hyperparameters() if table is None else table
    entry = table.get(dataset, {})
    params = {**entry.get("default", {}), **entry.get(f"{order}/{learning}", {})}
    params.update(order=order, learning=learning)
    params.update({k: v for k, v in overrides.items() if v is not None})
    return ModelConfig.from_dict(params)


# ---------------------------------------------------------------------------
# sensitivity sweep
# ---------------------------------------------------------------------------

class SweepError(PalmError):
    pass


@dataclass
class SweepRow:
    b1: float
    b2: float
    nrmse: float
    ndei: float
    exec_time: float
    rules: int


def _sweep_point(args) -> SweepRow:
    dataset, cfg, force = args
    try:
        r = run_experiment(dataset, cfg, force=force).report
    except Exception as exc:
        raise SweepError(f"grid point b1={cfg.b1}, b2={cfg.b2}: {exc}") from exc
    return SweepRow(cfg.b1, cfg.b2, r.nrmse, r.ndei, r.exec_time, r.rule_count)


def sensitivity_sweep(dataset: Dataset, base: ModelConfig, b1_grid: Iterable[float] = (),
                      b2_grid: Iterable[float] = (), workers: int = 1, force: bool = False) -> List[SweepRow]:
    """One train/test run per ``(b1, b2)`` grid point.

    An empty grid on one axis keeps the base value for that threshold; two
    empty grids give an empty table.
    """
    b1_grid, b2_grid = list(b1_grid), list(b2_grid)
    if not b1_grid and not b2_grid:
        return []
    if not force:
        for v in b1_grid + b2_grid:
            if not 0.01 <= v <= 0.1:
                raise SweepError(f"grid value {v} outside [0.01, 0.1]")
    points = [(b1, b2) for b1 in (b1_grid or [base.b1]) for b2 in (b2_grid or [base.b2])]
    jobs = [(dataset, ModelConfig.from_dict({**base.to_dict(), "b1": b1, "b2": b2}), force) for b1, b2 in points]
    if workers <= 1:
        return [_sweep_point(j) for j in jobs]
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def format_sweep(rows: Sequence[SweepRow]) -> str:
    lines = ["b1      b2      NRMSE   NDEI    time(s)  rules"]
    for r in rows:
        lines.append(f"{r.b1:<7.3f} {r.b2:<7.3f} {r.nrmse:<7.4f} {r.ndei:<7.4f} {r.exec_time:<8.3f} {r.rules}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def _builtin_loaders(standin: bool, paths: Optional[Dict[str, str]]) -> Dict[str, Callable[[], Dataset]]:
    paths = paths or {}

    def real(name):
        return lambda: load_real_world(name, paths.get(name), standin=standin and name not in paths)

    return {
        "box-jenkins": real("box-jenkins"),
        "mackey-glass": gen_mackey_glass,
        "nonlinear-sysid": gen_nonlinear_sysid,
        "quadcopter": real("quadcopter"),
        "helicopter": real("helicopter"),
        "sp500": real("sp500"),
    }


SUITES = {
    "synthetic": ("box-jenkins", "mackey-glass", "nonlinear-sysid"),
    "real": ("quadcopter", "helicopter", "sp500"),
}


@dataclass
class SuiteResult:
    reports: List[MetricReport]
    skipped: List[str]

    @property
    def complete(self) -> bool:
        return not self.skipped


def _suite_job(args):
    name, loader, cfg, out_dir, plots = args
    result = run_experiment(loader(), cfg)
    if out_dir is not None:
        write_outputs(result, out_dir, f"{name}-{cfg.order}-{cfg.learning}", plots)
    return result.report


def experiment_suite(suite: str, out_dir=None, workers: int = 1, standin: bool = False,
                     paths: Optional[Dict[str, str]] = None, table: Optional[dict] = None,
                     loaders: Optional[Dict[str, Callable[[], Dataset]]] = None,
                     plots: bool = False) -> SuiteResult:
    """Run all four configurations on every dataset of a named suite.

    Datasets that cannot be loaded are skipped with a warning and listed in
    the result.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    loaders = loaders or _builtin_loaders(standin, paths)
    jobs, skipped = [], []
    for name in SUITES[suite]:
        try:
            loaders[name]()
        except DatasetError as exc:
            log.warning("skipping %s: %s", name, exc)
            skipped.append(name)
            continue
        for order, learning in CONFIGS:
            jobs.append((name, loaders[name], config_for(name, order, learning, table), out_dir, plots))
    if workers <= 1:
        reports = [_suite_job(j) for j in jobs]
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_suite_job, jobs))
    return SuiteResult(reports, skipped)
