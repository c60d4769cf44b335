"""Structural evolution: rule growing by input/output coherence and rule merging.

Coherence uses the maximal information compression index (MCI): the
smallest eigenvalue of the 2x2 covariance matrix of two paired scalar
sequences.  It is zero for perfectly correlated sequences and grows as the
pair decorrelates.

The hyperplane response of rule ``i`` at time ``t`` is ``x_e(t) . omega_i``.
Its moments against the inputs and the target follow exactly from the
running joint covariance of ``[x, y]``, so one streaming estimator serves
every rule, including rules created mid-stream or modified by merging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .inference import (
    Hyperplane,
    IntervalHyperplane,
    PalmError,
    RuleBase,
)

VAR_EPS = 1e-12


class DegenerateRuleError(PalmError, ValueError):
    pass


# ---------------------------------------------------------------------------
# MCI
# ---------------------------------------------------------------------------

def mci_from_moments(var_u, var_v, cov_uv):
    """MCI from second moments.  Returns ``(xi, flagged)``.

    Broadcasts over array arguments.  A (numerically) constant sequence
    leaves the Pearson coefficient undefined; it is taken as 0 and the pair
    is flagged.
    """
    var_u, var_v, cov_uv = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (var_u, var_v, cov_uv)))
    flagged = (var_u <= VAR_EPS) | (var_v <= VAR_EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(flagged, 0.0, cov_uv / np.sqrt(np.where(flagged, 1.0, var_u * var_v)))
    s = var_u + var_v
    disc = s * s - 4.0 * var_u * var_v * (1.0 - rho * rho)
    xi = 0.5 * (s - np.sqrt(np.maximum(disc, 0.0)))
    xi = np.where(flagged, 0.0, np.maximum(xi, 0.0))
    if xi.ndim == 0:
        return float(xi), bool(flagged)
    return xi, flagged


def mci_correlation(u: Sequence[float], v: Sequence[float]) -> float:
    """Batch MCI of two equal-length sequences (population moments)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("u and v must be 1-D sequences of equal length")
    if u.size < 2:
        raise ValueError("need at least two paired samples")
    du, dv = u - u.mean(), v - v.mean()
    xi, _ = mci_from_moments(du @ du / u.size, dv @ dv / u.size, du @ dv / u.size)
    return xi


# ---------------------------------------------------------------------------
# streaming moments
# ---------------------------------------------------------------------------

@dataclass
class CoherenceState:
    """Running mean and co-moment of ``z = [x_1..x_n, y]`` (Welford update)."""

    n: int
    count: int = 0
    mean: np.ndarray = None
    comoment: np.ndarray = None

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.n + 1)
        if self.comoment is None:
            self.comoment = np.zeros((self.n + 1, self.n + 1))

    def update(self, x: np.ndarray, y: float) -> None:
        z = np.append(np.asarray(x, dtype=float), y)
        self.count += 1
        delta = z - self.mean
        self.mean = self.mean + delta / self.count
        self.comoment = self.comoment + np.outer(delta, z - self.mean)

    @property
    def cov(self) -> np.ndarray:
        """Population covariance of ``[x, y]``."""
        if self.count == 0:
            return np.zeros_like(self.comoment)
        return self.comoment / self.count

    @property
    def input_mean(self) -> np.ndarray:
        return self.mean[:-1]

    def response_moments(self, omega: np.ndarray):
        """Moments of the response ``x_e . omega`` over all samples seen.

        Returns ``(var_h, cov_h_x, cov_h_y)``; ``cov_h_x`` has one entry per
        input channel.  The intercept cancels out of every central moment.
        """
        S = self.cov
        a = np.asarray(omega, dtype=float)[1:]
        Sxx = S[:-1, :-1]
        Sxy = S[:-1, -1]
        return float(a @ Sxx @ a), Sxx @ a, float(a @ Sxy)

    def copy(self) -> "CoherenceState":
        return CoherenceState(self.n, self.count, self.mean.copy(), self.comoment.copy())


def _mean_unflagged(xi, flagged):
    kept = np.where(flagged, 0.0, xi)
    n = np.sum(~flagged, axis=-1)
    return np.where(n > 0, kept.sum(axis=-1) / np.maximum(n, 1), np.nan)


def input_target_mci(state: CoherenceState) -> float:
    """MCI between the inputs and the target, averaged over input channels."""
    S = state.cov
    xi, flagged = mci_from_moments(np.diag(S)[:-1], S[-1, -1], S[:-1, -1])
    return float(_mean_unflagged(np.atleast_1d(xi), np.atleast_1d(flagged)))


def response_coherence(state: CoherenceState, weights: np.ndarray):
    """Input coherence and response-target MCI for stacked ``(R, n+1)`` weights.

    Returns two length-R arrays; NaN marks a score left undefined by a
    zero-variance sequence.
    """
    S = state.cov
    A = np.atleast_2d(np.asarray(weights, dtype=float))[:, 1:]
    Sxx, Sxy = S[:-1, :-1], S[:-1, -1]
    cov_hx = A @ Sxx
    var_h = np.einsum("ij,ij->i", cov_hx, A)
    xi_hx, flag_hx = mci_from_moments(var_h[:, None], np.diag(Sxx)[None, :], cov_hx)
    i_c = _mean_unflagged(np.atleast_2d(xi_hx), np.atleast_2d(flag_hx))
    xi_ht, flag_ht = mci_from_moments(var_h, S[-1, -1], A @ Sxy)
    return i_c, np.where(np.atleast_1d(flag_ht), np.nan, xi_ht)


@dataclass
class Coherence:
    input_coherence: np.ndarray
    output_coherence: np.ndarray
    xi_input_target: float


def input_output_coherence(rb: RuleBase, state: CoherenceState) -> Coherence:
    """Per-rule input coherence ``I_c`` and output coherence ``O_c``.

    Entries are NaN where a zero-variance channel left the measure undefined.
    For type-2 the lower/upper values are blended with ``(q_l, 1 - q_l)`` and
    ``(q_r, 1 - q_r)`` and the left/right blends averaged.
    """
    if state.count < 2:
        raise ValueError("coherence needs at least two samples")
    xi_xt = input_target_mci(state)
    if rb.type2:
        ic_lo, ht_lo = response_coherence(state, np.vstack([r.omega_lower for r in rb.rules]))
        ic_up, ht_up = response_coherence(state, np.vstack([r.omega_upper for r in rb.rules]))

        def blend(lo, up):
            return 0.5 * (((1 - rb.q_l) * up + rb.q_l * lo) + ((1 - rb.q_r) * up + rb.q_r * lo))

        i_c, xi_ht = blend(ic_lo, ic_up), blend(ht_lo, ht_up)
    else:
        i_c, xi_ht = response_coherence(state, np.vstack([r.omega for r in rb.rules]))
    return Coherence(i_c, xi_xt - xi_ht, xi_xt)


# ---------------------------------------------------------------------------
# growing
# ---------------------------------------------------------------------------

@dataclass
class GrowDecision:
    grew: bool
    input_coherence: float = np.nan
    output_coherence: float = np.nan
    seeded_from: Optional[int] = None
    winner: Optional[int] = None


def bootstrap_rule(n_inputs: int, rb: RuleBase, fou: float = 0.05):
    d = n_inputs + 1
    if rb.type2:
        return IntervalHyperplane(-fou * np.ones(d), fou * np.ones(d), 1,
                                  rb.omega_init * np.eye(d), rb.omega_init * np.eye(d))
    return Hyperplane(np.zeros(d), 1, rb.omega_init * np.eye(d))


def clone_rule(rule, omega_init: float):
    d = rule.dim
    if isinstance(rule, IntervalHyperplane):
        return IntervalHyperplane(rule.omega_lower.copy(), rule.omega_upper.copy(), 1,
                                  omega_init * np.eye(d), omega_init * np.eye(d))
    return Hyperplane(rule.omega.copy(), 1, omega_init * np.eye(d))


def sample_coherence(rb: RuleBase, before: CoherenceState, after: CoherenceState) -> Coherence:
    """Coherence carried by the newest sample.

    The change of every coherence score when the sample enters the running
    moments, scaled by the sample count so that it does not fade as the
    stream grows.  Large input coherence marks a sample that breaks the
    linear relation between a rule's response and the inputs.
    """
    if after.count != before.count + 1:
        raise ValueError("states must differ by exactly one sample")
    c0 = input_output_coherence(rb, before)
    c1 = input_output_coherence(rb, after)
    k = after.count
    return Coherence(k * (c1.input_coherence - c0.input_coherence),
                     k * (c1.output_coherence - c0.output_coherence),
                     k * (c1.xi_input_target - c0.xi_input_target))


def maybe_grow(rb: RuleBase, state: CoherenceState, n_inputs: int, firing=None,
               fou: float = 0.05, previous: Optional[CoherenceState] = None) -> GrowDecision:
    """Add a rule when ``I_c > b1`` and ``O_c < b2`` hold for the candidate rule.

    With ``previous`` (the moments before the current sample) the scores are
    those of :func:`sample_coherence`; otherwise the cumulative scores of
    :func:`input_output_coherence` are used.  The candidate is the rule with
    the highest input coherence; a new rule inherits its weights and starts
    with a fresh ``omega_init * I`` covariance.  Otherwise the rule firing
    strongest on the current sample (``firing``) absorbs it and its support
    is incremented.
    """
    if not rb.rules:
        rb.rules.append(bootstrap_rule(n_inputs, rb, fou))
        return GrowDecision(True, seeded_from=None)
    winner = int(np.argmax(firing)) if firing is not None else 0
    ready = state.count >= 2 if previous is None else previous.count >= 2
    if not ready:
        rb.rules[winner].support += 1
        return GrowDecision(False, winner=winner)
    coh = input_output_coherence(rb, state) if previous is None else sample_coherence(rb, previous, state)
    valid = np.isfinite(coh.input_coherence) & np.isfinite(coh.output_coherence)
    if not np.any(valid):
        rb.rules[winner].support += 1
        return GrowDecision(False, winner=winner)
    if previous is not None and firing is not None:
        # per-sample scores: judge the sample against the rule that covers it
        star = winner
        if not valid[star]:
            rb.rules[winner].support += 1
            return GrowDecision(False, winner=winner)
    else:
        star = int(np.argmax(np.where(valid, coh.input_coherence, -np.inf)))
    i_c, o_c = float(coh.input_coherence[star]), float(coh.output_coherence[star])
    if i_c > rb.b1 and o_c < rb.b2:
        rb.rules.append(clone_rule(rb.rules[star], rb.omega_init))
        return GrowDecision(True, i_c, o_c, seeded_from=star)
    rb.rules[winner].support += 1
    return GrowDecision(False, i_c, o_c, winner=winner)


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------

def hyperplane_angle(w1, w2) -> float:
    """Acute angle between two weight vectors, in ``[0, pi/2]``."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    n1, n2 = np.linalg.norm(w1), np.linalg.norm(w2)
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateRuleError("angle undefined for a zero weight vector")
    c = abs(w1 @ w2) / (n1 * n2)
    return float(np.arccos(min(c, 1.0)))


def _unit_normal(omega: np.ndarray) -> np.ndarray:
    a = omega[1:]
    return np.append(-a, 1.0) / np.sqrt(1.0 + a @ a)


def hyperplane_min_distance(w1, w2, anchor=None) -> float:
    """Distance between two hyperplanes ``y = w . x_e``.

    Without ``anchor`` this is the geometric minimum: the plane-to-plane gap
    for parallel planes and 0 for intersecting ones.  With ``anchor`` both
    planes are sampled at that input point and the vertical gap is projected
    onto the normalized mean of the two unit normals, a local offset that
    equals the plane-to-plane gap when the planes are parallel.
    """
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if anchor is None:
        if not np.array_equal(w1[1:], w2[1:]):
            return 0.0
        return float(abs(w1[0] - w2[0]) / np.sqrt(1.0 + w1[1:] @ w1[1:]))
    x0 = np.asarray(anchor, dtype=float)
    m = _unit_normal(w1) + _unit_normal(w2)
    m /= np.linalg.norm(m)
    gap = (w1[0] + w1[1:] @ x0) - (w2[0] + w2[1:] @ x0)
    return float(abs(m[-1] * gap))


@dataclass
class MergeReport:
    merged: bool = False
    kept: Optional[int] = None
    removed: Optional[int] = None
    angle: float = np.nan
    distance: float = np.nan


def _rule_tracks(rule):
    if isinstance(rule, IntervalHyperplane):
        return [rule.omega_lower, rule.omega_upper]
    return [rule.omega]


def merge_pair(rb: RuleBase, a: int, b: int) -> MergeReport:
    """Fuse rules ``a`` and ``b`` by support-weighted averaging.

    The rule with larger support (lower index on ties) survives and keeps its
    covariance; the other is removed.
    """
    ra, rb_ = rb.rules[a], rb.rules[b]
    keep, drop = (a, b) if ra.support >= rb_.support else (b, a)
    rk, rd = rb.rules[keep], rb.rules[drop]
    n_k, n_d = rk.support, rd.support
    total = n_k + n_d
    if isinstance(rk, IntervalHyperplane):
        rk.omega_lower = (rk.omega_lower * n_k + rd.omega_lower * n_d) / total
        rk.omega_upper = (rk.omega_upper * n_k + rd.omega_upper * n_d) / total
    else:
        rk.omega = (rk.omega * n_k + rd.omega * n_d) / total
    rk.support = total
    del rb.rules[drop]
    kept_after = keep if keep < drop else keep - 1
    return MergeReport(True, kept_after, drop)


def _pairwise_geometry(W: np.ndarray, anchor: np.ndarray):
    """Angles and mean-normal distances between all rows of ``W``; NaN for zero rows."""
    norms = np.linalg.norm(W, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = W / norms[:, None]
        angles = np.arccos(np.minimum(np.abs(U @ U.T), 1.0))
    angles[np.ix_(norms == 0.0, np.arange(len(W)))] = np.nan
    angles[np.ix_(np.arange(len(W)), norms == 0.0)] = np.nan
    A = W[:, 1:]
    N = np.hstack([-A, np.ones((len(W), 1))]) / np.sqrt(1.0 + np.einsum("ij,ij->i", A, A))[:, None]
    M = N[:, None, :] + N[None, :, :]
    m_last = M[..., -1] / np.linalg.norm(M, axis=-1)
    level = W[:, 0] + A @ anchor
    dists = np.abs(m_last * (level[:, None] - level[None, :]))
    return angles, dists


def maybe_merge(rb: RuleBase, anchor=None, grew: bool = False) -> MergeReport:
    """Merge at most one pair satisfying ``angle <= c1`` and ``distance <= c2``.

    Only active in local learning and only on samples where no rule was
    added.  Among qualifying pairs the one with the smallest angle wins;
    pairs involving a zero weight vector are skipped.
    """
    if rb.learning != "local" or grew or len(rb.rules) < 2:
        return MergeReport()
    R = len(rb.rules)
    d = rb.rules[0].dim
    x0 = np.zeros(d - 1) if anchor is None else np.asarray(anchor, dtype=float)
    tracks = list(zip(*[_rule_tracks(r) for r in rb.rules]))
    geo = [_pairwise_geometry(np.vstack(t), x0) for t in tracks]
    theta = np.max([g[0] for g in geo], axis=0)
    dist = np.max([g[1] for g in geo], axis=0)
    iu = np.triu_indices(R, 1)
    th, ds = theta[iu], dist[iu]
    ok = np.isfinite(th) & (th <= rb.c1) & (ds <= rb.c2)
    if not np.any(ok):
        return MergeReport()
    # smallest angle; ties resolved by row-major pair order
    best = np.flatnonzero(ok)[np.argmin(th[ok])]
    i, j = int(iu[0][best]), int(iu[1][best])
    report = merge_pair(rb, i, j)
    report.angle, report.distance = float(th[best]), float(ds[best])
    return report
