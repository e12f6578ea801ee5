"""Probability- and class-voting combiners for fill-probability models.

Soft voting (mean probability) feeds the quote optimizer, which needs a
fill probability; hard majority voting produces the class used for
accuracy/F1 reporting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def soft_vote(member_probs: np.ndarray) -> float | np.ndarray:
    """Arithmetic mean over members. 1-D input: one probability per member.
    2-D input: rows are members, columns samples."""
    p = np.asarray(member_probs, dtype=float)
    if p.size == 0:
        raise ValueError("no member probabilities")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("member probabilities must lie in [0, 1]")
    out = p.mean(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def majority_vote(member_probs: np.ndarray, threshold: float = 0.5) -> int | np.ndarray:
    """Class 1 iff strictly more than half the members exceed the threshold.

    An exact tie (even member count) breaks deterministically to class 0,
    with a warning.
    """
    p = np.asarray(member_probs, dtype=float)
    if p.size == 0:
        raise ValueError("no member probabilities")
    votes = (p > threshold).sum(axis=0)
    n = p.shape[0]
    ties = votes * 2 == n
    if np.any(ties):
        warnings.warn("majority vote tie; breaking to class 0")
    out = (votes * 2 > n).astype(int)
    return int(out) if np.ndim(out) == 0 else out


@dataclass
class EnsembleModel:
    """Ordered member models sharing one feature schema.

    Members must expose predict_proba(x) -> probabilities.
    """

    members: list = field(default_factory=list)
    vote_mode: str = "soft"
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if self.vote_mode not in ("soft", "hard"):
            raise ValueError("vote_mode must be 'soft' or 'hard'")

    def member_probs(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([np.atleast_1d(m.predict_proba(x)) for m in self.members])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return soft_vote(self.member_probs(x))

    def predict_class(self, x: np.ndarray) -> np.ndarray:
        probs = self.member_probs(x)
        if self.vote_mode == "hard":
            return majority_vote(probs, self.threshold)
        return (soft_vote(probs) > self.threshold).astype(int)
