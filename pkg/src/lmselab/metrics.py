"""Anomaly scores, AUROC, and loss-curve statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .losses import DEFAULT_EPS


def anomaly_score(y, yhat, kind: str = "mse", eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-sample reconstruction error, reduced over all non-batch axes.

    ``kind='lmse'`` takes the log of each pixel's error before averaging, so it
    is not a monotone function of the per-sample MSE.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"target shape {y.shape} != reconstruction shape {yhat.shape}")
    sq = ((y - yhat) ** 2).reshape(len(y), -1)
    kind = kind.lower()
    if kind == "mse":
        return sq.mean(axis=1)
    if kind == "lmse":
        return (-np.log(1.0 + eps - sq)).mean(axis=1)
    raise ValueError(f"unknown score kind {kind!r}")


@dataclass(frozen=True)
class ScoreSet:
    normal_scores: np.ndarray
    anomalous_scores: np.ndarray

    @classmethod
    def from_labels(cls, scores, binary_labels) -> ScoreSet:
        scores = np.asarray(scores, dtype=np.float64)
        lab = np.asarray(binary_labels)
        return cls(scores[lab == 0], scores[lab == 1])


def auroc(scores: ScoreSet) -> float:
    """P(anomalous > normal) + 0.5 * P(tie), via average ranks (Mann-Whitney U)."""
    neg = np.asarray(scores.normal_scores, dtype=np.float64)
    pos = np.asarray(scores.anomalous_scores, dtype=np.float64)
    n, m = neg.size, pos.size
    if n == 0 or m == 0:
        raise ValueError("AUROC needs at least one normal and one anomalous score")
    ranks = rankdata(np.concatenate([neg, pos]))
    u = ranks[n:].sum() - m * (m + 1) / 2.0
    return float(u / (n * m))


def auroc_pairwise(scores: ScoreSet) -> float:
    """O(n*m) reference: count every (normal, anomalous) pair."""
    neg = np.asarray(scores.normal_scores, dtype=np.float64)
    pos = np.asarray(scores.anomalous_scores, dtype=np.float64)
    if neg.size == 0 or pos.size == 0:
        raise ValueError("AUROC needs at least one normal and one anomalous score")
    wins = ties = 0
    for a in pos:
        wins += int(np.count_nonzero(a > neg))
        ties += int(np.count_nonzero(a == neg))
    return (wins + 0.5 * ties) / (neg.size * pos.size)


@dataclass(frozen=True)
class ConvergenceStats:
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray
    n_runs: int

    @property
    def epochs(self) -> int:
        return len(self.mean)


def convergence_stats(loss_curves) -> ConvergenceStats:
    """Per-epoch mean / population std / min / max across runs.

    Curves of unequal length are truncated to the shortest. Values are sorted
    per epoch before reducing so run order cannot change the rounding.
    """
    curves = [np.asarray(c, dtype=np.float64) for c in loss_curves]
    if not curves:
        raise ValueError("no loss curves given")
    length = min(len(c) for c in curves)
    stack = np.sort(np.stack([c[:length] for c in curves]), axis=0)
    return ConvergenceStats(
        stack.mean(axis=0), stack.std(axis=0), stack.min(axis=0), stack.max(axis=0), len(curves)
    )
