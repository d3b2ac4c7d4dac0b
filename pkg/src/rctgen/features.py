"""Fixed-length geometric descriptors used as distillation features.

A descriptor is the D2 shape distribution (histogram of distances between
seeded random point pairs on [0, 2]), optionally followed by the normalised
covariance spectrum and the per-kind label frequencies.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, UnnormalizedInput
from .metrics import FeatureMatrix
from .primitives import PrimitiveKind


@dataclass(frozen=True)
class DescriptorConfig:
    d2_bins: int = 64
    d2_pairs: int = 4096
    include_eigen: bool = True
    include_label_hist: bool = False
    pair_seed: int = 0

    def __post_init__(self):
        if self.d2_bins < 2:
            raise InvalidParams("d2_bins must be at least 2")
        if self.d2_pairs < 1:
            raise InvalidParams("d2_pairs must be positive")

    @property
    def dim(self):
        return self.d2_bins + 3 * self.include_eigen + len(PrimitiveKind) * self.include_label_hist

    def to_dict(self):
        return {
            "d2_bins": self.d2_bins,
            "d2_pairs": self.d2_pairs,
            "include_eigen": self.include_eigen,
            "include_label_hist": self.include_label_hist,
            "pair_seed": self.pair_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("d2_bins", "d2_pairs", "include_eigen",
                                        "include_label_hist", "pair_seed") if k in d})


def _points_and_labels(cloud):
    if hasattr(cloud, "points"):
        return np.asarray(cloud.points, dtype=np.float64), getattr(cloud, "semantic", None)
    return np.asarray(cloud, dtype=np.float64), None


def extract_descriptor(cloud, cfg=None):
    cfg = cfg or DescriptorConfig()
    pts, semantic = _points_and_labels(cloud)
    if np.sqrt((pts ** 2).sum(axis=1)).max() > 1.0 + 1e-6:
        raise UnnormalizedInput("cloud must be normalised to the unit ball")
    # lexicographic order makes the pair draw independent of input order
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]
    rng = np.random.default_rng(cfg.pair_seed)
    i = rng.integers(len(pts), size=cfg.d2_pairs)
    j = rng.integers(len(pts), size=cfg.d2_pairs)
    dist = np.sqrt(((pts[i] - pts[j]) ** 2).sum(axis=1))
    hist, _ = np.histogram(dist, bins=cfg.d2_bins, range=(0.0, 2.0))
    parts = [hist / hist.sum()]
    if cfg.include_eigen:
        eig = np.sort(np.linalg.eigvalsh(np.cov(pts.T, bias=True)))[::-1]
        eig = np.maximum(eig, 0.0)
        parts.append(eig / eig.sum())
    if cfg.include_label_hist:
        if semantic is None:
            raise InvalidParams("label histogram requested for an unlabelled cloud")
        counts = np.bincount(np.asarray(semantic, dtype=np.int64), minlength=len(PrimitiveKind))
        parts.append(counts / counts.sum())
    return np.concatenate(parts)


def batch_features(dataset, cfg=None, threads=1):
    """Descriptor matrix with one row per cloud; row ids are object indices.

    ``dataset`` yields ``(object_index, cloud)`` pairs.
    """
    cfg = cfg or DescriptorConfig()
    items = list(dataset)
    ids = [int(idx) for idx, _ in items]

    def one(item):
        idx, cloud = item
        try:
            return extract_descriptor(cloud, cfg)
        except Exception as exc:
            raise type(exc)(f"row for object {idx}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, items))
    else:
        rows = [one(item) for item in items]
    data = np.vstack(rows) if rows else np.zeros((0, cfg.dim))
    return FeatureMatrix(data, np.asarray(ids, dtype=np.uint64))
