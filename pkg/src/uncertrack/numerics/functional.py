"""Scalar/array math used across the model: squashing, softmax, losses.

These are the plain (non-recorded) forms.  The differentiable twins live on
``Tape``; both obey the same contracts and the test suite cross-checks them.
"""

from __future__ import annotations

import numpy as np

from .tape import NumericsError

__all__ = ["sigmoid", "logit", "masked_softmax", "smooth_l1", "bce",
           "SCORE_EPS", "clamp_score"]

# scores are pushed into [SCORE_EPS, 1 - SCORE_EPS] before logit/BCE
SCORE_EPS = 1e-7


def sigmoid(x):
    """Logistic function, elementwise; output strictly inside (0, 1)."""
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(y):
    """Inverse of :func:`sigmoid`; defined only on the open interval (0, 1)."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise NumericsError("logit requires values strictly inside (0, 1)")
    return np.log(y) - np.log1p(-y)


def clamp_score(s):
    return np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS)


def masked_softmax(scores, mask) -> np.ndarray:
    """Softmax over the entries where ``mask`` is true; masked entries are 0.

    Invariant to adding a constant to all active scores; at least one entry
    must be active.
    """
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if scores.shape != mask.shape:
        raise NumericsError("masked_softmax: scores and mask shapes differ")
    if not mask.any():
        raise NumericsError("masked_softmax: empty mask")
    out = np.zeros_like(scores)
    active = scores[mask]
    e = np.exp(active - active.max())
    out[mask] = e / e.sum()
    return out


def smooth_l1(pred, target, beta: float = 1.0) -> float:
    """Mean smooth-L1 (Huber-style) distance between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise NumericsError("smooth_l1: length mismatch")
    if beta <= 0.0:
        raise NumericsError("smooth_l1: beta must be positive")
    d = np.abs(pred - target)
    per = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return float(per.mean())


def bce(score, label) -> float:
    """Binary cross entropy of a clamped score against a {0, 1} label."""
    s = clamp_score(np.asarray(score, dtype=np.float64))
    lab = np.asarray(label, dtype=np.float64)
    return float(np.mean(-(lab * np.log(s) + (1.0 - lab) * np.log(1.0 - s))))
