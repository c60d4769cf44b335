"""Consequent adaptation: fuzzily weighted generalized RLS and q-factor descent.

Local mode keeps one covariance matrix per hyperplane (per track for
type-2) and weights each update by the rule's normalized firing strength.
Global mode runs a single RLS over the concatenated weights of every rule
(one per weight track for type-2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from .inference import (
    OMEGA_INIT,
    Hyperplane,
    IntervalHyperplane,
    RuleBase,
    StreamSample,
    Type2Output,
)

log = logging.getLogger(__name__)


@dataclass
class FwgrlsConfig:
    beta: float = 1e-7
    omega_init: float = OMEGA_INIT

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.omega_init <= 0:
            raise ValueError("omega_init must be > 0")


@dataclass
class QFactors:
    q_l: float = 0.3
    q_r: float = 0.7
    a: float = 0.1

    @classmethod
    def initial(cls, q_l: float = 0.3, q_r: float = 0.7, a: float = 0.1) -> "QFactors":
        if not q_l < q_r:
            raise ValueError("q factors must start with q_l < q_r")
        return cls(q_l, q_r, a)


def _gain(C: np.ndarray, x_e: np.ndarray, lam: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Cx = C @ x_e
        return Cx / (1.0 / lam + x_e @ Cx)


def _cov_update(C: np.ndarray, gain: np.ndarray, x_e: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        C_new = C - np.outer(gain, x_e @ C)
    return 0.5 * (C_new + C_new.T)


def fwgrls_update(omega, C, x_e, y, lam, beta=1e-7, omega_init=OMEGA_INIT) -> Tuple[np.ndarray, np.ndarray, bool]:
    """One FWGRLS step on raw arrays.

    Returns ``(omega, C, reset)``.  ``reset`` is True when the gain came out
    non-finite and the covariance was re-initialized to ``omega_init * I``
    (weights are left untouched in that case).
    """
    gain = _gain(C, x_e, lam)
    if not np.all(np.isfinite(gain)):
        return omega.copy(), omega_init * np.eye(omega.size), True
    C_new = _cov_update(C, gain, x_e)
    if not np.all(np.isfinite(C_new)):
        return omega.copy(), omega_init * np.eye(omega.size), True
    err = y - x_e @ omega
    # quadratic decay: grad(0.5 * |w|^2) = w, evaluated at the previous weights
    omega_new = omega - beta * (C_new @ omega) + gain * err
    return omega_new, C_new, False


def fwrls_update(omega, C, x_e, y, lam) -> Tuple[np.ndarray, np.ndarray]:
    """Fuzzily weighted RLS without weight decay (reference for beta = 0)."""
    gain = _gain(C, x_e, lam)
    C_new = _cov_update(C, gain, x_e)
    err = y - x_e @ omega
    return omega + gain * err, C_new


def fwgrls_step(rule: Hyperplane, sample: StreamSample, lam: float,
                config: Optional[FwgrlsConfig] = None) -> Hyperplane:
    cfg = config or FwgrlsConfig()
    omega, C, reset = fwgrls_update(rule.omega, rule.cov, sample.x_e, sample.y_d, lam, cfg.beta, cfg.omega_init)
    if reset:
        log.warning("sample %d: non-finite gain, covariance reset", sample.k)
    return Hyperplane(omega, rule.support, C)


def fwgrls_step_type2(rule: IntervalHyperplane, sample: StreamSample, lam_lower: float, lam_upper: float,
                      config: Optional[FwgrlsConfig] = None) -> IntervalHyperplane:
    cfg = config or FwgrlsConfig()
    lo, C_lo, r1 = fwgrls_update(rule.omega_lower, rule.cov_lower, sample.x_e, sample.y_d, lam_lower,
                                 cfg.beta, cfg.omega_init)
    up, C_up, r2 = fwgrls_update(rule.omega_upper, rule.cov_upper, sample.x_e, sample.y_d, lam_upper,
                                 cfg.beta, cfg.omega_init)
    if r1 or r2:
        log.warning("sample %d: non-finite gain, covariance reset", sample.k)
    return IntervalHyperplane(lo, up, rule.support, C_lo, C_up)


def fwgrls_batch(W: np.ndarray, C: np.ndarray, x_e: np.ndarray, y: float, lam: np.ndarray,
                 beta: float = 1e-7, omega_init: float = OMEGA_INIT):
    """:func:`fwgrls_update` applied to every rule at once.

    ``W`` is ``(R, d)``, ``C`` is ``(R, d, d)`` and ``lam`` holds one firing
    weight per rule.  Returns ``(W, C, reset)`` with a boolean reset mask.
    """
    Cx = C @ x_e
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gain = Cx / (1.0 / lam + Cx @ x_e)[:, None]
        C_new = C - gain[:, :, None] * (x_e @ C)[:, None, :]
    C_new = 0.5 * (C_new + np.swapaxes(C_new, 1, 2))
    reset = ~(np.all(np.isfinite(gain), axis=1) & np.all(np.isfinite(C_new), axis=(1, 2)))
    err = y - W @ x_e
    W_new = W - beta * np.einsum("rij,rj->ri", C_new, W) + gain * err[:, None]
    if np.any(reset):
        W_new[reset] = W[reset]
        C_new[reset] = omega_init * np.eye(W.shape[1])
    return W_new, C_new, reset


# ---------------------------------------------------------------------------
# global learning
# ---------------------------------------------------------------------------

def global_parameters(rb: RuleBase, track: Optional[str] = None) -> np.ndarray:
    """Concatenated weights of every rule; ``track`` picks lower/upper for type-2."""
    if rb.type2:
        attr = {"lower": "omega_lower", "upper": "omega_upper"}[track]
        return np.concatenate([getattr(r, attr) for r in rb.rules])
    return np.concatenate([r.omega for r in rb.rules])


def _scatter_parameters(rb: RuleBase, theta: np.ndarray, track: Optional[str] = None) -> None:
    d = rb.rules[0].dim
    attr = "omega" if not rb.type2 else {"lower": "omega_lower", "upper": "omega_upper"}[track]
    for j, r in enumerate(rb.rules):
        setattr(r, attr, theta[d * j: d * (j + 1)].copy())


def global_regressor(x_e: np.ndarray, firing) -> np.ndarray:
    """``[l_1 x_e, ..., l_R x_e]`` with ``l_j`` the normalized firing strengths."""
    lam = np.asarray(firing, float) / np.sum(firing)
    return np.concatenate([l * x_e for l in lam])


def _global_update(rb, cov, sample, firing, track=None):
    theta = global_parameters(rb, track)
    phi = global_regressor(sample.x_e, firing)
    theta, cov, reset = fwgrls_update(theta, cov, phi, sample.y_d, 1.0, rb.beta, rb.omega_init)
    if reset:
        log.warning("sample %d: non-finite global gain, covariance reset", sample.k)
    _scatter_parameters(rb, theta, track)
    return cov, reset


def global_step(rb: RuleBase, cov: np.ndarray, sample: StreamSample, firing) -> Tuple[np.ndarray, bool]:
    """One RLS update over the weights of all rules at once; rules are updated in place.

    Returns the new global covariance and whether it had to be reset.
    """
    return _global_update(rb, cov, sample, firing)


def global_step_type2(rb: RuleBase, cov_lower: np.ndarray, cov_upper: np.ndarray, sample: StreamSample,
                      f_lower, f_upper) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Global update of an interval rule base: one concatenated RLS per track.

    Both tracks are regressed on the normalized interval-centre firing
    ``(f_lower + f_upper) / 2`` so that each track stays a fit of the target.
    """
    centre = 0.5 * (np.asarray(f_lower, float) + np.asarray(f_upper, float))
    cov_lower, r1 = _global_update(rb, cov_lower, sample, centre, "lower")
    cov_upper, r2 = _global_update(rb, cov_upper, sample, centre, "upper")
    return cov_lower, cov_upper, r1 or r2


def extend_global_cov(cov: Optional[np.ndarray], size: int, omega_init: float = OMEGA_INIT) -> np.ndarray:
    """Append a fresh ``omega_init * I`` block of the given size."""
    block = omega_init * np.eye(size)
    if cov is None or cov.size == 0:
        return block
    return block_diag(cov, block)


# ---------------------------------------------------------------------------
# q design factors
# ---------------------------------------------------------------------------

def q_gradient(out: Type2Output, y_d: float) -> Tuple[float, float]:
    """Gradient of ``E = 0.5 (y_d - y_out)^2`` with respect to ``(q_l, q_r)``."""
    s_lo, s_up = out.f_lower.sum(), out.f_upper.sum()
    e = y_d - out.y
    d_yl = (out.f_lower @ out.c_lower) / s_up - (out.f_upper @ out.c_lower) / s_lo
    d_yr = (out.f_lower @ out.c_upper) / s_up - (out.f_upper @ out.c_upper) / s_lo
    return float(-0.5 * e * d_yl), float(-0.5 * e * d_yr)


def adapt_q(q: QFactors, out: Type2Output, y_d: float) -> QFactors:
    g_l, g_r = q_gradient(out, y_d)
    # ordering q_l < q_r is only imposed at initialization
    return QFactors(float(np.clip(q.q_l - q.a * g_l, 0.0, 1.0)),
                    float(np.clip(q.q_r - q.a * g_r, 0.0, 1.0)), q.a)
