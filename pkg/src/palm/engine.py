"""Single-pass training/prediction loop, run traces and model snapshots."""

from __future__ import annotations

import dataclasses
import json
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import dynamics, learning
from .inference import (
    OMEGA_INIT,
    DimensionError,
    EmptyRuleBaseError,
    Hyperplane,
    IntervalHyperplane,
    PalmError,
    RuleBase,
    StreamSample,
    type1_firing,
    type2_firing,
    type_reduce,
)

SNAPSHOT_FORMAT = "palm-snapshot"
SNAPSHOT_VERSION = 1


class ConfigError(PalmError, ValueError):
    pass


class SnapshotError(PalmError, ValueError):
    pass


# name -> (low, high); checked unless force=True
RANGES = {
    "gamma": (1.0, 100.0),
    "b1": (0.01, 0.1),
    "b2": (0.01, 0.1),
    "c1": (0.01, 0.1),
    "c2": (0.001, 0.1),
}


@dataclass
class ModelConfig:
    """Everything that defines a model before it sees data.

    ``feedback_slots`` lists ``(input_index, offset)`` pairs: input
    ``input_index`` (0-based, excluding the intercept) holds the target
    observed ``offset`` samples earlier.  Recurrent prediction replaces those
    slots by the model's own earlier predictions.

    ``coherence`` selects the growth scores: ``"sample"`` scores the newest
    sample against the rule covering it, ``"cumulative"`` scores every rule
    on all samples seen so far.
    """

    order: str = "type1"
    learning: str = "local"
    recurrent: bool = False
    gamma: float = 10.0
    b1: float = 0.02
    b2: float = 0.05
    c1: float = 0.05
    c2: float = 0.05
    beta: float = 1e-7
    omega_init: float = OMEGA_INIT
    lr: float = 0.1
    q_l: float = 0.3
    q_r: float = 0.7
    fou: float = 0.05
    coherence: str = "sample"
    feedback_slots: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        self.feedback_slots = tuple((int(i), int(o)) for i, o in self.feedback_slots)

    def validate(self, force: bool = False) -> "ModelConfig":
        if self.order not in ("type1", "type2"):
            raise ConfigError(f"order must be 'type1' or 'type2', got {self.order!r}")
        if self.learning not in ("local", "global"):
            raise ConfigError(f"learning must be 'local' or 'global', got {self.learning!r}")
        if self.coherence not in ("sample", "cumulative"):
            raise ConfigError(f"coherence must be 'sample' or 'cumulative', got {self.coherence!r}")
        if not force:
            for name, (lo, hi) in RANGES.items():
                v = getattr(self, name)
                if not lo <= v <= hi:
                    raise ConfigError(f"{name}={v} outside [{lo:g}, {hi:g}] (use force to override)")
        if self.beta < 0:
            raise ConfigError(f"beta={self.beta} must be >= 0")
        if self.omega_init <= 0:
            raise ConfigError(f"omega_init={self.omega_init} must be > 0")
        if self.order == "type2" and not self.q_l < self.q_r:
            raise ConfigError(f"q_l={self.q_l} must be < q_r={self.q_r}")
        if self.recurrent and not self.feedback_slots:
            raise ConfigError("recurrent mode needs at least one lagged-output input slot (feedback_slots)")
        for i, o in self.feedback_slots:
            if i < 0 or o < 1:
                raise ConfigError(f"invalid feedback slot {(i, o)}")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["feedback_slots"] = [list(s) for s in self.feedback_slots]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class TraceRecord:
    k: int
    y_hat: float
    y_d: float
    rule_count: int
    event: str = "none"
    predicted: bool = True


@dataclass
class RunTrace:
    records: List[TraceRecord] = field(default_factory=list)
    wall_time: float = 0.0
    param_count: int = 0

    def __len__(self):
        return len(self.records)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    @property
    def k(self):
        return np.array([r.k for r in self.records], dtype=int)

    @property
    def y_hat(self):
        return np.array([r.y_hat for r in self.records])

    @property
    def y_d(self):
        return np.array([r.y_d for r in self.records])

    @property
    def rule_count(self):
        return np.array([r.rule_count for r in self.records], dtype=int)

    @property
    def events(self):
        return [r.event for r in self.records]

    @property
    def predicted(self):
        return np.array([r.predicted for r in self.records], dtype=bool)

    @property
    def final_rules(self) -> int:
        return self.records[-1].rule_count if self.records else 0

    def scored(self):
        """``(y_hat, y_d)`` restricted to samples where a prediction existed."""
        m = self.predicted
        return self.y_hat[m], self.y_d[m]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,y_d,y_hat,rule_count,event\n")
            for r in self.records:
                fh.write(f"{r.k},{float(r.y_d)!r},{float(r.y_hat)!r},{r.rule_count},{r.event}\n")

    def __eq__(self, other):
        return isinstance(other, RunTrace) and self.records == other.records


class CountingStream:
    """Iterator wrapper that counts how many samples were drawn."""

    def __init__(self, samples: Iterable[StreamSample]):
        self._it = iter(samples)
        self.drawn = 0

    def __iter__(self):
        return self

    def __next__(self):
        s = next(self._it)
        self.drawn += 1
        return s


class Palm:
    """An evolving hyperplane-based fuzzy regressor (type-1 or interval type-2)."""

    def __init__(self, config: Optional[ModelConfig] = None, force: bool = False):
        self.config = (config or ModelConfig()).validate(force=force)
        c = self.config
        self.rb = RuleBase([], c.order, c.learning, c.gamma, c.q_l, c.q_r, c.b1, c.b2, c.c1, c.c2,
                           c.beta, c.omega_init, c.lr)
        self.n: Optional[int] = None
        self.state: Optional[dynamics.CoherenceState] = None
        # one concatenated covariance per weight track (global learning only)
        self.global_cov: Optional[List[np.ndarray]] = None
        self.k = 0
        self.last_prediction = 0.0
        self.anomalies = 0

    # -- inference ---------------------------------------------------------

    @property
    def n_rules(self) -> int:
        return self.rb.n_rules

    def param_count(self) -> int:
        return self.rb.param_count()

    def _check_dim(self, sample: StreamSample):
        if self.n is None:
            self.n = sample.n_inputs
            self.state = dynamics.CoherenceState(self.n)
        elif sample.n_inputs != self.n:
            raise DimensionError(f"sample {sample.k}: expected {self.n} inputs, got {sample.n_inputs}")

    def _forward(self, x_e: np.ndarray, y_ref: float):
        """Returns ``(prediction, firing, type2_output)`` for the current rules."""
        if self.rb.type2:
            f_lo, f_up, c_lo, c_up = type2_firing(x_e, y_ref, self.rb.rules, self.rb.gamma)
            out = type_reduce(f_lo, f_up, c_lo, c_up, self.rb.q_l, self.rb.q_r)
            return out.y, 0.5 * (f_lo + f_up), out
        mu = type1_firing(x_e, y_ref, self.rb)
        W = np.vstack([r.omega for r in self.rb.rules])
        return float(mu @ (W @ x_e) / mu.sum()), mu, None

    def predict_one(self, sample: StreamSample, y_ref: Optional[float] = None) -> float:
        """Frozen-parameter prediction; ``y_ref`` stands in for the target in the distance."""
        if not self.rb.rules:
            raise EmptyRuleBaseError("model has no rules; train it first")
        if sample.n_inputs != self.n:
            raise DimensionError(f"sample {sample.k}: expected {self.n} inputs, got {sample.n_inputs}")
        return self._forward(sample.x_e, sample.y_d if y_ref is None else y_ref)[0]

    # -- learning ----------------------------------------------------------

    def learn_one(self, sample: StreamSample) -> TraceRecord:
        """Test-then-train on one sample."""
        self._check_dim(sample)
        self.k += 1
        rb = self.rb
        x_e, y = sample.x_e, sample.y_d
        had_rules = bool(rb.rules)
        if had_rules:
            y_hat, firing, _ = self._forward(x_e, y)
        else:
            y_hat, firing = 0.0, None

        previous = self.state.copy()
        self.state.update(sample.x, y)
        R_before = rb.n_rules
        decision = dynamics.maybe_grow(rb, self.state, self.n, firing, self.config.fou,
                                      previous if self.config.coherence == "sample" else None)
        event = "none"
        if decision.grew:
            event = "grow" if had_rules else "init"
            if rb.learning == "global":
                d = rb.rules[-1].dim
                tracks = 2 if rb.type2 else 1
                covs = self.global_cov or [None] * tracks
                self.global_cov = [learning.extend_global_cov(c, d, rb.omega_init) for c in covs]
        else:
            report = dynamics.maybe_merge(rb, anchor=self.state.input_mean, grew=False)
            if report.merged:
                event = "merge"
        assert rb.n_rules - R_before == {"grow": 1, "init": 1, "merge": -1, "none": 0}[event]

        self._adapt(sample)
        if had_rules:
            self.last_prediction = y_hat
        return TraceRecord(sample.k, float(y_hat), y, rb.n_rules, event, had_rules)

    def _adapt(self, sample: StreamSample):
        rb = self.rb
        x_e, y = sample.x_e, sample.y_d
        if rb.type2:
            f_lo, f_up, c_lo, c_up = type2_firing(x_e, y, rb.rules, rb.gamma)
            out = type_reduce(f_lo, f_up, c_lo, c_up, rb.q_l, rb.q_r)
            if rb.learning == "global":
                c_lo, c_up, reset = learning.global_step_type2(rb, *self.global_cov, sample, f_lo, f_up)
                self.global_cov = [c_lo, c_up]
                self.anomalies += reset
            else:
                self._local_step(sample, f_lo / f_lo.sum(), "omega_lower", "cov_lower")
                self._local_step(sample, f_up / f_up.sum(), "omega_upper", "cov_upper")
            q = learning.adapt_q(learning.QFactors(rb.q_l, rb.q_r, rb.lr), out, y)
            rb.q_l, rb.q_r = q.q_l, q.q_r
        else:
            mu = type1_firing(x_e, y, rb)
            if rb.learning == "global":
                cov, reset = learning.global_step(rb, self.global_cov[0], sample, mu)
                self.global_cov = [cov]
                self.anomalies += reset
            else:
                self._local_step(sample, mu / mu.sum(), "omega", "cov")

    def _local_step(self, sample: StreamSample, lam: np.ndarray, w_attr: str, c_attr: str):
        rules = self.rb.rules
        W = np.vstack([getattr(r, w_attr) for r in rules])
        C = np.stack([getattr(r, c_attr) for r in rules])
        W, C, reset = learning.fwgrls_batch(W, C, sample.x_e, sample.y_d, lam, self.rb.beta, self.rb.omega_init)
        if np.any(reset):
            self.anomalies += int(reset.sum())
            learning.log.warning("sample %d: non-finite gain, covariance reset", sample.k)
        for r, w, c in zip(rules, W, C):
            setattr(r, w_attr, w)
            setattr(r, c_attr, c)

    def train(self, stream: Iterable[StreamSample]) -> RunTrace:
        trace = RunTrace()
        t0 = time.perf_counter()
        for sample in stream:
            trace.append(self.learn_one(sample))
        trace.wall_time = time.perf_counter() - t0
        trace.param_count = self.param_count()
        return trace

    # -- evaluation --------------------------------------------------------

    def predict(self, stream: Iterable[StreamSample], recurrent: Optional[bool] = None) -> RunTrace:
        """Frozen evaluation pass.

        With ``recurrent`` the unavailable target in the distance is replaced
        by the previous prediction (seeded by the last training prediction)
        and feedback input slots are filled with the model's own earlier
        predictions once enough of them exist.
        """
        if not self.rb.rules:
            raise EmptyRuleBaseError("model has no rules; train it first")
        recurrent = self.config.recurrent if recurrent is None else recurrent
        if recurrent and not self.config.feedback_slots:
            raise ConfigError("recurrent prediction needs feedback_slots in the model config")
        max_off = max((o for _, o in self.config.feedback_slots), default=1)
        history = deque([self.last_prediction], maxlen=max_off)
        trace = RunTrace()
        t0 = time.perf_counter()
        for sample in stream:
            if sample.n_inputs != self.n:
                raise DimensionError(f"sample {sample.k}: expected {self.n} inputs, got {sample.n_inputs}")
            if recurrent:
                x_e = sample.x_e.copy()
                for slot, off in self.config.feedback_slots:
                    if len(history) >= off:
                        x_e[slot + 1] = history[-off]
                y_hat = self._forward(x_e, history[-1])[0]
                history.append(y_hat)
            else:
                y_hat = self._forward(sample.x_e, sample.y_d)[0]
            trace.append(TraceRecord(sample.k, float(y_hat), sample.y_d, self.rb.n_rules, "none", True))
        trace.wall_time = time.perf_counter() - t0
        trace.param_count = self.param_count()
        return trace

    # -- persistence -------------------------------------------------------

    def snapshot(self) -> str:
        """Canonical JSON text of the full model state (floats round-trip exactly)."""
        rules = []
        for r in self.rb.rules:
            if isinstance(r, IntervalHyperplane):
                rules.append({"omega_lower": r.omega_lower.tolist(), "omega_upper": r.omega_upper.tolist(),
                              "support": int(r.support), "cov_lower": r.cov_lower.tolist(),
                              "cov_upper": r.cov_upper.tolist()})
            else:
                rules.append({"omega": r.omega.tolist(), "support": int(r.support), "cov": r.cov.tolist()})
        state = None
        if self.state is not None:
            state = {"count": self.state.count, "mean": self.state.mean.tolist(),
                     "comoment": self.state.comoment.tolist()}
        payload = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "config": self.config.to_dict(),
            "n": self.n,
            "k": self.k,
            "q_l": self.rb.q_l,
            "q_r": self.rb.q_r,
            "last_prediction": self.last_prediction,
            "anomalies": self.anomalies,
            "rules": rules,
            "coherence": state,
            "global_cov": None if self.global_cov is None else [c.tolist() for c in self.global_cov],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def restore(cls, text: str, config: Optional[ModelConfig] = None) -> "Palm":
        try:
            payload = json.loads(text)
        except (json.JSONDecodeError, TypeError) as exc:
            raise SnapshotError(f"corrupt snapshot: {exc}") from None
        if not isinstance(payload, dict) or payload.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError("not a palm snapshot")
        if payload.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {payload.get('version')}")
        try:
            saved = ModelConfig.from_dict(payload["config"])
            if config is not None and (config.order, config.learning) != (saved.order, saved.learning):
                raise SnapshotError(
                    f"snapshot holds a {saved.order}/{saved.learning} model, config asks for "
                    f"{config.order}/{config.learning}")
            model = cls(saved, force=True)
            model.n = payload["n"]
            model.k = payload["k"]
            model.rb.q_l = payload["q_l"]
            model.rb.q_r = payload["q_r"]
            model.last_prediction = payload["last_prediction"]
            model.anomalies = payload["anomalies"]
            for r in payload["rules"]:
                if "omega_lower" in r:
                    if saved.order != "type2":
                        raise SnapshotError("interval rule in a type-1 snapshot")
                    model.rb.rules.append(IntervalHyperplane(np.array(r["omega_lower"]), np.array(r["omega_upper"]),
                                                             r["support"], np.array(r["cov_lower"]),
                                                             np.array(r["cov_upper"])))
                else:
                    if saved.order != "type1":
                        raise SnapshotError("type-1 rule in a type-2 snapshot")
                    model.rb.rules.append(Hyperplane(np.array(r["omega"]), r["support"], np.array(r["cov"])))
            coh = payload["coherence"]
            if coh is not None:
                model.state = dynamics.CoherenceState(model.n, coh["count"], np.array(coh["mean"]),
                                                      np.array(coh["comoment"]))
            if payload["global_cov"] is not None:
                model.global_cov = [np.array(c, dtype=float) for c in payload["global_cov"]]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SnapshotError):
                raise
            raise SnapshotError(f"corrupt snapshot: {exc!r}") from None
        return model


def train_stream(config: ModelConfig, stream: Iterable[StreamSample], force: bool = False) -> Tuple[Palm, RunTrace]:
    model = Palm(config, force=force)
    return model, model.train(stream)


def predict_stream(model: Palm, stream: Iterable[StreamSample], recurrent: Optional[bool] = None) -> RunTrace:
    return model.predict(stream, recurrent)


def samples_from_arrays(X, y, start: int = 1) -> Iterator[StreamSample]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    ones = np.ones((X.shape[0], 1))
    Xe = np.hstack([ones, X])
    for i in range(Xe.shape[0]):
        yield StreamSample(Xe[i], y[i], start + i)
