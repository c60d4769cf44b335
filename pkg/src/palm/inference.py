"""Hyperplane-shaped fuzzy inference for type-1 and interval type-2 rule bases.

Every rule is a hyperplane ``y = b0 + a . x`` in the joint input/target
space.  The hyperplane is both the premise (memberships come from the
point-to-hyperplane distance) and the consequent (the rule output is the
hyperplane evaluated at the current input).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

OMEGA_INIT = 1e5


class PalmError(Exception):
    """Base class for errors raised by the package."""


class NumericDomainError(PalmError, ValueError):
    pass


class EmptyRuleBaseError(PalmError):
    pass


class DimensionError(PalmError, ValueError):
    pass


@dataclass
class StreamSample:
    """One stream observation.

    ``x_e`` is the extended input ``[1, x1, ..., xn]``; ``y_d`` the target and
    ``k`` the 1-based position in the stream.
    """

    x_e: np.ndarray
    y_d: float
    k: int = 1

    def __post_init__(self):
        self.x_e = np.asarray(self.x_e, dtype=float)
        if self.x_e.ndim != 1 or self.x_e.size < 1:
            raise DimensionError("x_e must be a non-empty 1-D vector")
        if self.x_e[0] != 1.0:
            raise DimensionError("x_e[0] must be exactly 1 (intercept slot)")
        self.y_d = float(self.y_d)

    @classmethod
    def from_inputs(cls, x, y_d: float, k: int = 1) -> "StreamSample":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.concatenate(([1.0], x)), y_d, k)

    @property
    def x(self) -> np.ndarray:
        return self.x_e[1:]

    @property
    def n_inputs(self) -> int:
        return self.x_e.size - 1


@dataclass
class Hyperplane:
    omega: np.ndarray
    support: int = 1
    cov: np.ndarray = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float).copy()
        if self.cov is None:
            self.cov = OMEGA_INIT * np.eye(self.omega.size)
        else:
            self.cov = np.asarray(self.cov, dtype=float).copy()

    @property
    def dim(self) -> int:
        return self.omega.size

    def copy(self) -> "Hyperplane":
        return Hyperplane(self.omega.copy(), self.support, self.cov.copy())


@dataclass
class IntervalHyperplane:
    omega_lower: np.ndarray
    omega_upper: np.ndarray
    support: int = 1
    cov_lower: np.ndarray = None
    cov_upper: np.ndarray = None

    def __post_init__(self):
        self.omega_lower = np.asarray(self.omega_lower, dtype=float).copy()
        self.omega_upper = np.asarray(self.omega_upper, dtype=float).copy()
        if self.omega_lower.shape != self.omega_upper.shape:
            raise DimensionError("lower and upper weight vectors differ in length")
        eye = np.eye(self.omega_lower.size)
        self.cov_lower = OMEGA_INIT * eye if self.cov_lower is None else np.asarray(self.cov_lower, float).copy()
        self.cov_upper = OMEGA_INIT * eye if self.cov_upper is None else np.asarray(self.cov_upper, float).copy()

    @property
    def dim(self) -> int:
        return self.omega_lower.size

    def copy(self) -> "IntervalHyperplane":
        return IntervalHyperplane(self.omega_lower.copy(), self.omega_upper.copy(), self.support,
                                  self.cov_lower.copy(), self.cov_upper.copy())


Rule = Union[Hyperplane, IntervalHyperplane]


@dataclass
class RuleBase:
    """Ordered rules plus the hyperparameters that act on them."""

    rules: List[Rule] = field(default_factory=list)
    order: str = "type1"
    learning: str = "local"
    gamma: float = 10.0
    q_l: float = 0.3
    q_r: float = 0.7
    b1: float = 0.02
    b2: float = 0.05
    c1: float = 0.05
    c2: float = 0.05
    beta: float = 1e-7
    omega_init: float = OMEGA_INIT
    lr: float = 0.1

    @property
    def type2(self) -> bool:
        return self.order == "type2"

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    def param_count(self) -> int:
        """Tunable consequent parameters: ``R(n+1)``, doubled for type-2."""
        if not self.rules:
            return 0
        per_rule = self.rules[0].dim
        return (2 if self.type2 else 1) * len(self.rules) * per_rule


# ---------------------------------------------------------------------------
# type-1 building blocks
# ---------------------------------------------------------------------------

def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericDomainError("non-finite value in input")


def hyperplane_distance(x_e: np.ndarray, y_d: float, omega: np.ndarray) -> float:
    """Orthogonal distance from ``(x, y_d)`` to ``y = omega . x_e``.

    The intercept ``omega[0]`` does not enter the normalizing norm.
    """
    omega = np.asarray(omega, dtype=float)
    x_e = np.asarray(x_e, dtype=float)
    if omega.shape != x_e.shape:
        raise DimensionError(f"weight length {omega.size} != extended input length {x_e.size}")
    _check_finite(x_e, omega, np.array([y_d], dtype=float))
    slopes = omega[1:]
    return float(abs(y_d - x_e @ omega) / np.sqrt(1.0 + slopes @ slopes))


def point_to_hyperplane_distance(sample: StreamSample, rule: Hyperplane) -> float:
    return hyperplane_distance(sample.x_e, sample.y_d, rule.omega)


def hyperplane_distances(x_e: np.ndarray, y_d: float, weights: np.ndarray) -> np.ndarray:
    """Vectorized distances for a stacked ``(R, n+1)`` weight matrix."""
    weights = np.atleast_2d(weights)
    _check_finite(x_e, weights, np.array([y_d], dtype=float))
    slopes = weights[:, 1:]
    return np.abs(y_d - weights @ x_e) / np.sqrt(1.0 + np.einsum("ij,ij->i", slopes, slopes))


def membership(distances: Sequence[float], gamma: float) -> np.ndarray:
    """``exp(-gamma * d / max(d))`` over the rules present at this sample.

    When every distance is zero all rules fit perfectly and each gets 1.
    """
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise EmptyRuleBaseError("no rules: grow the first rule before evaluating memberships")
    if not np.any(np.isfinite(d)):
        raise NumericDomainError("all distances are non-finite")
    d_max = np.max(d)
    if d_max == 0.0:
        return np.ones_like(d)
    return np.exp(-gamma * d / d_max)


def consequent(sample: StreamSample, rule: Hyperplane) -> float:
    if rule.omega.shape != sample.x_e.shape:
        raise DimensionError(f"weight length {rule.omega.size} != extended input length {sample.x_e.size}")
    return float(sample.x_e @ rule.omega)


def weighted_average(firing: np.ndarray, consequents: np.ndarray) -> float:
    return float(firing @ consequents / np.sum(firing))


def stack_weights(rules: Sequence[Hyperplane]) -> np.ndarray:
    return np.vstack([r.omega for r in rules])


def type1_firing(x_e: np.ndarray, y_d: float, rb: RuleBase) -> np.ndarray:
    if not rb.rules:
        raise EmptyRuleBaseError("empty rule base: grow the first rule before inference")
    return membership(hyperplane_distances(x_e, y_d, stack_weights(rb.rules)), rb.gamma)


def infer_type1(sample: StreamSample, rb: RuleBase) -> float:
    if not rb.rules:
        raise EmptyRuleBaseError("empty rule base: grow the first rule before inference")
    W = stack_weights(rb.rules)
    if W.shape[1] != sample.x_e.size:
        raise DimensionError("rule dimension does not match sample")
    mu = membership(hyperplane_distances(sample.x_e, sample.y_d, W), rb.gamma)
    return weighted_average(mu, W @ sample.x_e)


# ---------------------------------------------------------------------------
# interval type-2
# ---------------------------------------------------------------------------

@dataclass
class Type2Output:
    """Crisp output of an interval type-2 pass plus the pieces q-adaptation needs."""

    y: float
    y_l: float
    y_r: float
    f_lower: np.ndarray
    f_upper: np.ndarray
    c_lower: np.ndarray
    c_upper: np.ndarray


def type_reduce(f_lower, f_upper, c_lower, c_upper, q_l: float, q_r: float) -> Type2Output:
    """q-factor type reduction with the cross-normalized sums.

    The left output blends lower consequents, the right output upper ones;
    lower firing strengths are normalized by the upper-firing sum and vice
    versa.
    """
    f_lower = np.asarray(f_lower, float)
    f_upper = np.asarray(f_upper, float)
    c_lower = np.asarray(c_lower, float)
    c_upper = np.asarray(c_upper, float)
    s_lower = f_lower.sum()
    s_upper = f_upper.sum()
    y_l = q_l * (f_lower @ c_lower) / s_upper + (1.0 - q_l) * (f_upper @ c_lower) / s_lower
    y_r = q_r * (f_lower @ c_upper) / s_upper + (1.0 - q_r) * (f_upper @ c_upper) / s_lower
    return Type2Output(0.5 * (y_l + y_r), float(y_l), float(y_r), f_lower, f_upper, c_lower, c_upper)


def type2_firing(x_e: np.ndarray, y_d: float, rules: Sequence[IntervalHyperplane], gamma: float):
    """Interval firing strengths, ordered so that lower <= upper per rule."""
    if not rules:
        raise EmptyRuleBaseError("empty rule base: grow the first rule before inference")
    W_lo = np.vstack([r.omega_lower for r in rules])
    W_up = np.vstack([r.omega_upper for r in rules])
    # each track is normalized by its own largest distance
    m_lo = membership(hyperplane_distances(x_e, y_d, W_lo), gamma)
    m_up = membership(hyperplane_distances(x_e, y_d, W_up), gamma)
    return np.minimum(m_lo, m_up), np.maximum(m_lo, m_up), W_lo @ x_e, W_up @ x_e


def infer_type2(sample: StreamSample, rb: RuleBase) -> Type2Output:
    if not rb.rules:
        raise EmptyRuleBaseError("empty rule base: grow the first rule before inference")
    if rb.rules[0].dim != sample.x_e.size:
        raise DimensionError("rule dimension does not match sample")
    f_lo, f_up, c_lo, c_up = type2_firing(sample.x_e, sample.y_d, rb.rules, rb.gamma)
    return type_reduce(f_lo, f_up, c_lo, c_up, rb.q_l, rb.q_r)
