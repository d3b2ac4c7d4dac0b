"""Target-aware dataset pruning by MMD data adaptivity.

The adaptivity of a row x of D is d(D without x, T) - d(D, T) with d the
(biased) MMD. Rows whose removal would increase the distance the most are
the ones worth keeping. The proxy score

    mean_j k(x, t_j) - 1/(m-1) * sum_{i != x} k(x, d_i)

ranks rows in the same order at O(m (m + n)) total cost.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import IndexOutOfRange, InvalidParams, LengthMismatch
from .metrics import FeatureMatrix, kernel_row_sums, mmd_squared

DEFAULT_RATIO = 0.7
DEFAULT_THRESHOLD = 10_000


@dataclass(frozen=True)
class DistillConfig:
    retention_ratio: float = DEFAULT_RATIO
    size_threshold: int = DEFAULT_THRESHOLD
    epochs: int = 5

    def __post_init__(self):
        if not 0.0 < self.retention_ratio < 1.0:
            raise InvalidParams("retention_ratio must lie in (0, 1)")
        if self.size_threshold < 1:
            raise InvalidParams("size_threshold must be at least 1")
        if self.epochs < 1:
            raise InvalidParams("epochs must be at least 1")

    def to_dict(self):
        return {"r": self.retention_ratio, "size_t": self.size_threshold, "epochs": self.epochs}


@dataclass
class AdaptivityScores:
    scores: np.ndarray
    row_ids: np.ndarray
    kind: str = "proxy"

    def __len__(self):
        return len(self.scores)


def _mmd(D, T, cfg):
    return float(np.sqrt(max(mmd_squared(D, T, cfg), 0.0)))


def adaptivity_exact(i, D, T, cfg):
    """Brute-force adaptivity of row ``i``: two full MMD evaluations."""
    X = D.data if isinstance(D, FeatureMatrix) else np.asarray(D, dtype=np.float64)
    Y = T.data if isinstance(T, FeatureMatrix) else np.asarray(T, dtype=np.float64)
    m = len(X)
    if m < 2:
        raise InvalidParams("adaptivity needs at least two rows in D")
    if not 0 <= i < m:
        raise IndexOutOfRange(f"row {i} outside [0, {m})")
    rest = np.delete(X, i, axis=0)
    return _mmd(rest, Y, cfg) - _mmd(X, Y, cfg)


def adaptivity_exact_all(D, T, cfg, rows=None):
    rows = range(D.m) if rows is None else rows
    scores = np.array([adaptivity_exact(i, D, T, cfg) for i in rows])
    return AdaptivityScores(scores, D.row_ids[list(rows)], "exact")


def adaptivity_proxy(D, T, cfg, include_self=False):
    """Proxy scores for every row of D against T.

    ``include_self`` keeps the k(x, x) term in the D-sum (the literal
    inclusive reading); it shifts every score by the same constant for a
    stationary kernel.
    """
    X, Y = D.data, T.data
    m = len(X)
    if m < 2 or len(Y) < 1:
        raise InvalidParams("proxy needs m >= 2 and n >= 1")
    to_target = kernel_row_sums(X, Y, cfg) / len(Y)
    within = kernel_row_sums(X, X, cfg)
    if not include_self:
        # k(x, x) = 1 for every Gaussian mixture component
        within = within - 1.0
    return AdaptivityScores(to_target - within / (m - 1), D.row_ids.copy(), "proxy")


def next_size(size, cfg):
    if size <= cfg.size_threshold:
        return size
    # decimal arithmetic so that e.g. 0.7 * 350 floors to 245, not 244
    return max(math.floor(Fraction(repr(cfg.retention_ratio)) * size), cfg.size_threshold)


def distill_step(size, scores, cfg):
    """Row ids to keep: the top ``max(floor(r*size), size_t)`` scores.

    Ties go to the smaller row id. Nothing is dropped at or below size_t.
    """
    if len(scores) != size:
        raise LengthMismatch(f"{len(scores)} scores for a dataset of size {size}")
    if size <= cfg.size_threshold:
        return scores.row_ids.copy()
    keep = next_size(size, cfg)
    order = np.lexsort((scores.row_ids, -scores.scores))
    return scores.row_ids[np.sort(order[:keep])]


@dataclass
class EpochRecord:
    epoch: int
    size_before: int
    size_after: int
    retained_ids: list
    mmd_after: float
    score_stats: dict = field(default_factory=dict)


@dataclass
class DistillReport:
    config: DistillConfig
    kernel: dict
    epochs: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    @property
    def sizes(self):
        return [e.size_after for e in self.epochs]

    @property
    def final_ids(self):
        return np.asarray(self.epochs[-1].retained_ids, dtype=np.uint64)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "kernel": self.kernel,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "size_before": e.size_before,
                    "size_after": e.size_after,
                    "mmd_squared_after": e.mmd_after,
                    "score_stats": e.score_stats,
                    "retained_ids": [int(v) for v in e.retained_ids],
                }
                for e in self.epochs
            ],
            # wall-clock values live apart from the deterministic fields
            "timing": {"epoch_seconds": self.timings},
        }

    def to_json(self, with_timing=True):
        d = self.to_dict()
        if not with_timing:
            d.pop("timing")
        return json.dumps(d, indent=2, sort_keys=True)


def _no_hook(epoch, retained_ids):
    return None


def run_distillation(D, T, kcfg, dcfg, epoch_hook=None):
    """Progressively prune D towards T over ``dcfg.epochs`` epochs.

    ``epoch_hook(epoch, retained_ids)`` runs at the start of each epoch in
    place of a training pass; it must not mutate its arguments.
    """
    if D.d != T.d:
        raise InvalidParams(f"feature dims differ: {D.d} vs {T.d}")
    hook = epoch_hook or _no_hook
    report = DistillReport(dcfg, kcfg.to_dict())
    current = D
    for epoch in range(1, dcfg.epochs + 1):
        start = time.perf_counter()
        hook(epoch, current.row_ids.copy())
        size = current.m
        stats = {}
        if size > dcfg.size_threshold:
            scores = adaptivity_proxy(current, T, kcfg)
            kept = distill_step(size, scores, dcfg)
            pos = {int(r): k for k, r in enumerate(current.row_ids)}
            current = current.take([pos[int(r)] for r in kept])
            stats = {
                "min": float(scores.scores.min()),
                "max": float(scores.scores.max()),
                "mean": float(scores.scores.mean()),
            }
        report.epochs.append(EpochRecord(
            epoch, size, current.m, [int(v) for v in current.row_ids],
            float(mmd_squared(current, T, kcfg)), stats))
        report.timings.append(time.perf_counter() - start)
    return report
