"""Evaluation: AUROC from score vectors, accuracy, harmonic mean, throughput.

ID samples are the positive class; higher score means more ID-like.  AUROC is
computed by building the ROC step curve over distinct thresholds and
integrating with the trapezoid rule, which equals the Mann-Whitney statistic
with ties counted as half.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .model import Discriminator


@dataclass
class RocResult:
    auroc: float
    curve: List[Tuple[float, float]]  # (fpr, tpr), from (0,0) to (1,1)
    n_id: int
    n_ood: int


def auroc(id_scores, ood_scores) -> RocResult:
    """ROC curve and its area for separating ID (positive) from OOD scores."""
    pos = np.asarray(id_scores, dtype=np.float64).reshape(-1)
    neg = np.asarray(ood_scores, dtype=np.float64).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auroc needs nonempty ID and OOD score vectors")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise ValueError("auroc on non-finite scores")

    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, bool), np.zeros(neg.size, bool)])
    order = np.argsort(-scores, kind="stable")
    scores, is_pos = scores[order], is_pos[order]

    # one curve point per distinct threshold (tie groups collapse to a segment)
    boundary = np.nonzero(np.diff(scores))[0]
    cut = np.concatenate([boundary, [scores.size - 1]])
    tp = np.cumsum(is_pos)[cut]
    fp = np.cumsum(~is_pos)[cut]
    tpr = np.concatenate([[0.0], tp / pos.size])
    fpr = np.concatenate([[0.0], fp / neg.size])

    area = float(np.trapezoid(tpr, fpr))
    return RocResult(auroc=area, curve=list(zip(fpr.tolist(), tpr.tolist())),
                     n_id=int(pos.size), n_ood=int(neg.size))


def accuracy(model: Discriminator, inputs, labels) -> float:
    """Fraction of argmax predictions matching the labels."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] == 0:
        raise ValueError("accuracy of an empty set")
    if y.shape != (x.shape[0],):
        raise ValueError(f"labels shape {y.shape} does not match inputs {x.shape}")
    return float(np.mean(model.predict(x) == y))


def harmonic_mean(a: float, b: float) -> float:
    """2ab/(a+b) on [0,1] operands; 0 when both are 0."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError(f"harmonic_mean operands must lie in [0,1], got {a}, {b}")
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


@dataclass
class ThroughputResult:
    items_per_second: float
    n_items: int
    elapsed_seconds: float


def throughput(n_items: int, elapsed_seconds: float) -> float:
    if n_items < 1:
        raise ValueError("throughput needs at least one item")
    if elapsed_seconds <= 0.0:
        raise ValueError("throughput needs a positive elapsed time")
    return n_items / elapsed_seconds


def measure_throughput(op: Callable[[], object], n_items: int) -> ThroughputResult:
    """Time one call of ``op`` (setup excluded) and report items per second."""
    start = time.perf_counter()
    op()
    elapsed = time.perf_counter() - start
    return ThroughputResult(throughput(n_items, elapsed), n_items, elapsed)
