"""Benchmark streams: synthetic generators, CSV loading with lag maps, stand-ins.

A dataset is described by a lag map.  Every sample at time ``t`` takes
``column[t - lag]`` for each input and ``column[t + lead]`` as the target.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .inference import PalmError, StreamSample


class DatasetError(PalmError, ValueError):
    pass


@dataclass
class LagInput:
    column: str
    lag: int = 0


@dataclass
class DatasetSpec:
    """Lag structure and split protocol of one benchmark.

    ``train``/``test`` are sample counts; a float in (0, 1) for ``train`` is a
    fraction of the available samples, and ``test=None`` takes everything
    after the training block.  ``mirror`` appends the time-reversed series
    to itself before lagging.
    """

    name: str
    inputs: List[LagInput]
    target: str
    lead: int = 0
    train: Union[int, float] = 0
    test: Optional[int] = None
    path: Optional[str] = None
    normalize: str = "none"
    mirror: bool = False

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def feedback_slots(self) -> Tuple[Tuple[int, int], ...]:
        """Input slots holding earlier values of the target column, with their offsets."""
        return tuple((i, inp.lag + self.lead) for i, inp in enumerate(self.inputs)
                     if inp.column == self.target and inp.lag + self.lead >= 1)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": [{"column": i.column, "lag": i.lag} for i in self.inputs],
            "target": {"column": self.target, "lead": self.lead},
            "train": self.train,
            "test": self.test,
            "path": self.path,
            "normalize": self.normalize,
            "mirror": self.mirror,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        try:
            target = d["target"]
            if isinstance(target, str):
                target = {"column": target, "lead": 0}
            return cls(
                name=d["name"],
                inputs=[LagInput(i["column"], int(i.get("lag", 0))) for i in d["inputs"]],
                target=target["column"],
                lead=int(target.get("lead", 0)),
                train=d.get("train", 0),
                test=d.get("test"),
                path=d.get("path"),
                normalize=d.get("normalize", "none"),
                mirror=bool(d.get("mirror", False)),
            )
        except KeyError as exc:
            raise DatasetError(f"dataset spec is missing field {exc}") from None

    @classmethod
    def from_json(cls, path) -> "DatasetSpec":
        spec = cls.from_dict(json.loads(Path(path).read_text()))
        if spec.path is not None and not Path(spec.path).is_absolute():
            spec.path = str(Path(path).parent / spec.path)
        return spec


@dataclass
class Dataset:
    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    k_train: np.ndarray
    k_test: np.ndarray
    feedback_slots: Tuple[Tuple[int, int], ...] = ()
    input_names: List[str] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.X_train.shape[1]

    def train_stream(self) -> Iterator[StreamSample]:
        return _stream(self.X_train, self.y_train, self.k_train)

    def test_stream(self) -> Iterator[StreamSample]:
        return _stream(self.X_test, self.y_test, self.k_test)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "split", *self.input_names, "target"])
            for split, X, y, k in (("train", self.X_train, self.y_train, self.k_train),
                                   ("test", self.X_test, self.y_test, self.k_test)):
                for i in range(len(y)):
                    w.writerow([int(k[i]), split, *map(repr, X[i].tolist()), repr(float(y[i]))])


def _stream(X, y, k) -> Iterator[StreamSample]:
    ones = np.ones((X.shape[0], 1))
    Xe = np.hstack([ones, X])
    for i in range(Xe.shape[0]):
        yield StreamSample(Xe[i], y[i], int(k[i]))


def lag_matrix(series: Dict[str, np.ndarray], inputs: Sequence[LagInput], target: str, lead: int,
               times: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=int)
    X = np.column_stack([series[i.column][times - i.lag] for i in inputs])
    y = series[target][times + lead]
    return X, y


def _valid_times(n_rows: int, spec: DatasetSpec) -> np.ndarray:
    max_lag = max([i.lag for i in spec.inputs] + [0])
    last = n_rows - 1 - max(spec.lead, 0)
    first = max(max_lag, -min(spec.lead, 0))
    if last < first:
        raise DatasetError(f"{spec.name}: {n_rows} rows are too few for lag {max_lag} and lead {spec.lead}")
    return np.arange(first, last + 1)


def _split_counts(n_avail: int, spec: DatasetSpec) -> Tuple[int, int]:
    train = spec.train
    if isinstance(train, float) and 0 < train < 1:
        train = int(round(train * n_avail))
    train = int(train)
    test = n_avail - train if spec.test is None else int(spec.test)
    if train <= 0 or test <= 0 or train + test > n_avail:
        raise DatasetError(f"{spec.name}: split {train}/{test} does not fit {n_avail} lagged samples")
    return train, test


def build_dataset(series: Dict[str, np.ndarray], spec: DatasetSpec, k_offset: int = 1) -> Dataset:
    """Lag, split and optionally normalize named series according to ``spec``."""
    for i in spec.inputs:
        if i.column not in series:
            raise DatasetError(f"{spec.name}: missing column {i.column!r}")
    if spec.target not in series:
        raise DatasetError(f"{spec.name}: missing column {spec.target!r}")
    series = {c: np.asarray(v, dtype=float) for c, v in series.items()}
    if spec.mirror:
        series = {c: np.concatenate([v, v[::-1]]) for c, v in series.items()}
    n_rows = len(next(iter(series.values())))
    times = _valid_times(n_rows, spec)
    n_train, n_test = _split_counts(times.size, spec)
    if spec.normalize == "minmax":
        last_row = times[n_train - 1] + max(spec.lead, 0)
        scaled = {}
        for c, v in series.items():
            lo, hi = v[: last_row + 1].min(), v[: last_row + 1].max()
            scaled[c] = (v - lo) / (hi - lo) if hi > lo else v - lo
        series = scaled
    elif spec.normalize != "none":
        raise DatasetError(f"{spec.name}: unknown normalization {spec.normalize!r}")
    t_train, t_test = times[:n_train], times[n_train:n_train + n_test]
    X_tr, y_tr = lag_matrix(series, spec.inputs, spec.target, spec.lead, t_train)
    X_te, y_te = lag_matrix(series, spec.inputs, spec.target, spec.lead, t_test)
    names = [f"{i.column}(k-{i.lag})" if i.lag else f"{i.column}(k)" for i in spec.inputs]
    return Dataset(spec.name, X_tr, y_tr, X_te, y_te, t_train + k_offset, t_test + k_offset,
                   spec.feedback_slots, names)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def read_csv_columns(path) -> Dict[str, np.ndarray]:
    """Headered numeric CSV -> ``{column: values}``."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}:{r}: expected {len(header)} cells, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise DatasetError(f"{path}:{r}: non-numeric cell in {row}") from None
    if not data:
        raise DatasetError(f"{path}: no data rows")
    arr = np.array(data)
    return {h: arr[:, j] for j, h in enumerate(header)}


def load_csv_stream(path, spec: DatasetSpec) -> Dataset:
    return build_dataset(read_csv_columns(path), spec)


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------

def mackey_glass_series(n: int, tau: int = 17, a: float = 0.1, b: float = 0.2, h: float = 1.0,
                        y0: float = 1.2, power: int = 10) -> np.ndarray:
    """Mackey-Glass series on the grid ``t = 0, h, ..., n h`` by fixed-step RK4.

    ``dy/dt = b y(t-tau) / (1 + y(t-tau)^power) - a y(t)`` with ``y(t) = y0``
    for ``t <= 0``.  The delayed value at half steps is interpolated linearly
    between grid points, so ``tau`` must be a multiple of ``h``.  With
    ``tau = 0`` the equation is an ordinary ODE and the stages use the
    current state.
    """
    lag = int(round(tau / h))
    if abs(lag * h - tau) > 1e-12:
        raise ValueError("tau must be a multiple of h")
    y = np.empty(n + 1)
    y[0] = y0

    def f(yt, yd):
        return b * yd / (1.0 + yd ** power) - a * yt

    def past(i):
        return y[i] if i >= 0 else y0

    for k in range(n):
        yt = y[k]
        if lag == 0:
            k1 = f(yt, yt)
            s = yt + 0.5 * h * k1
            k2 = f(s, s)
            s = yt + 0.5 * h * k2
            k3 = f(s, s)
            s = yt + h * k3
            k4 = f(s, s)
        else:
            d0, d1 = past(k - lag), past(k - lag + 1)
            dm = 0.5 * (d0 + d1)
            k1 = f(yt, d0)
            k2 = f(yt + 0.5 * h * k1, dm)
            k3 = f(yt + 0.5 * h * k2, dm)
            k4 = f(yt + h * k3, d1)
        y[k + 1] = yt + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


MG_LAGS = (0, 6, 12, 18)


def gen_mackey_glass(tau: int = 17, horizon: int = 85, train=(201, 3200), test=(5001, 5500),
                     h: float = 1.0) -> Dataset:
    """Predict ``y(k + horizon)`` from ``y(k), y(k-6), y(k-12), y(k-18)``."""
    y = mackey_glass_series(test[1] + horizon, tau=tau, h=h)
    series = {"y": y}
    inputs = [LagInput("y", lag) for lag in MG_LAGS]
    t_tr = np.arange(train[0], train[1] + 1)
    t_te = np.arange(test[0], test[1] + 1)
    X_tr, y_tr = lag_matrix(series, inputs, "y", horizon, t_tr)
    X_te, y_te = lag_matrix(series, inputs, "y", horizon, t_te)
    slots = tuple((i, lag + horizon) for i, lag in enumerate(MG_LAGS))
    names = ["y(k)"] + [f"y(k-{lag})" for lag in MG_LAGS[1:]]
    return Dataset("mackey-glass", X_tr, y_tr, X_te, y_te, t_tr, t_te, slots, names)


def nonlinear_sysid_series(n: int, y0: float = 0.0):
    """``y(k+1) = y(k) / (1 + y(k)^2) + u(k)^3`` with ``u(k) = sin(2 pi k / 100)``."""
    k = np.arange(n + 1)
    u = np.sin(2 * np.pi * k / 100.0)
    y = np.empty(n + 1)
    y[0] = y0
    for i in range(n):
        y[i + 1] = y[i] / (1.0 + y[i] ** 2) + u[i] ** 3
    return u, y


def gen_nonlinear_sysid(n_train: int = 50000, n_test: int = 200, layout: str = "compact") -> Dataset:
    """``compact``: ``(y(k), u(k)) -> y(k+1)``; ``full``: ``(y(k)..y(k-10), u(k)) -> y(k+1)``."""
    if layout == "compact":
        inputs = [LagInput("y", 0), LagInput("u", 0)]
    elif layout == "full":
        inputs = [LagInput("y", lag) for lag in range(11)] + [LagInput("u", 0)]
    else:
        raise DatasetError(f"unknown layout {layout!r}")
    max_lag = max(i.lag for i in inputs)
    u, y = nonlinear_sysid_series(max_lag + n_train + n_test + 1)
    spec = DatasetSpec("nonlinear-sysid", inputs, "y", lead=1, train=n_train, test=n_test)
    ds = build_dataset({"u": u, "y": y}, spec, k_offset=0)
    return ds


# ---------------------------------------------------------------------------
# real-world benchmarks
# ---------------------------------------------------------------------------

BOX_JENKINS = DatasetSpec("box-jenkins", [LagInput("u", 4), LagInput("y", 1)], "y", 0,
                          train=200, test=90, normalize="minmax")
HELICOPTER = DatasetSpec("helicopter", [LagInput("y", 0), LagInput("u", 0)], "y", 1,
                         train=3600, normalize="minmax")
QUADCOPTER = DatasetSpec("quadcopter", [LagInput("y", 6), LagInput("u", 0)], "y", 0,
                         train=0.6, normalize="minmax")
SP500 = DatasetSpec("sp500", [LagInput("y", lag) for lag in range(5)], "y", 1,
                    train=14893, normalize="minmax", mirror=True)

REAL_WORLD = {s.name: s for s in (BOX_JENKINS, HELICOPTER, QUADCOPTER, SP500)}


def box_jenkins_standin(n: int = 296, seed: int = 0) -> Dict[str, np.ndarray]:
    """Gas-furnace-like series from the textbook transfer-function model.

    Input: AR(3) ``(1 - 1.97B + 1.37B^2 - 0.34B^3) u = a``, ``var a = 0.0353``.
    Output: ``y = 53.5 - (0.53 + 0.37B + 0.51B^2) / (1 - 0.57B) u(t-3) + n``
    with ``(1 - 1.53B + 0.63B^2) n = e``, ``var e = 0.0561``.
    Seeded, so the stand-in is deterministic.
    """
    rng = np.random.default_rng(seed)
    burn = 200
    N = n + burn
    a = rng.normal(0.0, math.sqrt(0.0353), N)
    e = rng.normal(0.0, math.sqrt(0.0561), N)
    u = np.zeros(N)
    v = np.zeros(N)
    noise = np.zeros(N)
    for t in range(3, N):
        u[t] = 1.97 * u[t - 1] - 1.37 * u[t - 2] + 0.34 * u[t - 3] + a[t]
        v[t] = 0.57 * v[t - 1] - (0.53 * u[t - 3] + 0.37 * u[t - 4] + 0.51 * u[t - 5]) if t >= 5 else 0.0
        noise[t] = 1.53 * noise[t - 1] - 0.63 * noise[t - 2] + e[t]
    return {"u": u[burn:], "y": 53.5 + v[burn:] + noise[burn:]}


def uav_standin(n: int, seed: int = 0, noise: float = 0.01) -> Dict[str, np.ndarray]:
    """Altitude-like response of a damped second-order plant to a saturating thrust input."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    u = 0.5 + 0.3 * np.sin(2 * np.pi * t / 400.0) + 0.1 * np.sign(np.sin(2 * np.pi * t / 97.0))
    y = np.zeros(n)
    v = 0.0
    for k in range(1, n):
        acc = 4.0 * np.tanh(u[k - 1] - 0.5) - 0.8 * v - 0.3 * (y[k - 1] - 1.0)
        v += 0.05 * acc
        y[k] = y[k - 1] + 0.05 * v
    return {"u": u, "y": y + rng.normal(0.0, noise, n)}


def sp500_standin(n: int = 14893, seed: int = 0) -> Dict[str, np.ndarray]:
    """Geometric random walk with a late drawdown; ``SP500.mirror`` reverses and appends it."""
    rng = np.random.default_rng(seed)
    r = rng.normal(3e-4, 0.009, n)
    r[int(0.97 * n):] -= 0.004
    return {"y": 17.0 * np.exp(np.cumsum(r))}


STANDINS = {
    "box-jenkins": lambda: box_jenkins_standin(),
    "helicopter": lambda: uav_standin(6000, seed=1, noise=0.005),
    "quadcopter": lambda: uav_standin(9112, seed=2, noise=0.02),
    "sp500": lambda: sp500_standin(),
}


def csv_env_var(name: str) -> str:
    """Environment variable that may point at the CSV of a real-world dataset."""
    return "PALM_" + name.upper().replace("-", "_") + "_CSV"


def load_real_world(name: str, path=None, standin: bool = False) -> Dataset:
    """Build a real-world benchmark from its CSV, or from the seeded stand-in.

    Without ``path`` the CSV location is read from ``PALM_<NAME>_CSV``.
    """
    if name not in REAL_WORLD:
        raise DatasetError(f"unknown dataset {name!r}; choose from {sorted(REAL_WORLD)}")
    spec = REAL_WORLD[name]
    if standin:
        ds = build_dataset(STANDINS[name](), spec)
        ds.name = f"{name}-standin"
        return ds
    path = path or os.environ.get(csv_env_var(name)) or spec.path
    if path is None:
        raise DatasetError(f"{name}: no CSV path given; pass one or set {csv_env_var(name)} (columns: "
                           f"{sorted({i.column for i in spec.inputs} | {spec.target})})")
    return load_csv_stream(path, spec)
