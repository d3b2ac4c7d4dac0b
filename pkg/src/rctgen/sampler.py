"""Point-membership classification over whole trees and labelled surface clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud, InvalidParams, SamplingExhausted
from .primitives import DEFAULT_TOL, Membership, sample_surface_batch


@dataclass(frozen=True)
class SamplerConfig:
    n_points: int = 1024
    tol: float = DEFAULT_TOL
    normalize: bool = True
    max_attempts_factor: int = 64
    with_normals: bool = True

    def __post_init__(self):
        if self.n_points < 1:
            raise InvalidParams("n_points must be at least 1")
        if self.tol < 0:
            raise InvalidParams("tol must be non-negative")
        if self.max_attempts_factor < 1:
            raise InvalidParams("max_attempts_factor must be positive")

    def to_dict(self):
        return {
            "n_points": self.n_points,
            "tol": self.tol,
            "normalize": self.normalize,
            "max_attempts_factor": self.max_attempts_factor,
            "with_normals": self.with_normals,
        }


@dataclass
class LabeledPointCloud:
    """Points with per-point primitive kind (semantic) and leaf index (instance).

    ``centroid`` and ``scale`` undo normalisation: raw = points * scale + centroid.
    """

    points: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    normals: np.ndarray = None
    source: tuple = (0, 0)
    centroid: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        if self.centroid is None:
            self.centroid = np.zeros(3)

    def __len__(self):
        return len(self.points)

    def raw_points(self):
        return self.points * self.scale + self.centroid


def classify_membership(sample, p, tol=DEFAULT_TOL):
    """In/On/Out of one point against the composed solid."""
    return Membership(int(sample.classify(np.reshape(p, (1, 3)), tol)[0]))


def classify_points(sample, points, tol=DEFAULT_TOL):
    return sample.classify(points, tol)


def normalize_cloud(points):
    """Centre on the centroid and scale the farthest point to unit norm."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise DegenerateCloud("empty cloud")
    centroid = points.mean(axis=0)
    centred = points - centroid
    scale = float(np.sqrt((centred ** 2).sum(axis=1)).max())
    if scale < 1e-12:
        raise DegenerateCloud("all points coincide")
    return centred / scale, centroid, scale


def _world_candidates(sample, leaf_idx, rng):
    n = len(leaf_idx)
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    flip = sample.subtrahend_parity
    for i, leaf in enumerate(sample.leaves):
        rows = np.flatnonzero(leaf_idx == i)
        if rows.size == 0:
            continue
        p, nv, _ = sample_surface_batch(leaf.kind, leaf.params, rng, rows.size)
        rot = leaf.pose.rotation
        pts[rows] = leaf.pose.scale * (p @ rot.T) + leaf.pose.translation
        nv = nv @ rot.T
        nrm[rows] = -nv if flip[i] else nv
    return pts, nrm


def sample_labeled_cloud(sample, cfg=None, rng=None):
    """Exactly ``cfg.n_points`` samples of the composed boundary.

    Candidates are drawn on leaf surfaces with probability proportional to
    world-space leaf area; a candidate from leaf i survives when the tree
    classifies it On with leaf i pinned On. Later waves are sized from the
    acceptance rate observed so far.
    """
    cfg = cfg or SamplerConfig()
    if rng is None:
        rng = np.random.default_rng()
    n = cfg.n_points
    areas = np.array([leaf.world_area for leaf in sample.leaves])
    probs = areas / areas.sum()
    budget = cfg.max_attempts_factor * n
    used = 0
    kept_pts, kept_nrm, kept_leaf = [], [], []
    kept = 0
    wave = min(2 * n, budget)
    while kept < n and wave > 0:
        leaf_idx = rng.choice(len(areas), size=wave, p=probs)
        pts, nrm = _world_candidates(sample, leaf_idx, rng)
        codes = sample.classify(pts, cfg.tol, forced=leaf_idx)
        ok = np.flatnonzero(codes == Membership.ON)
        kept_pts.append(pts[ok])
        kept_nrm.append(nrm[ok])
        kept_leaf.append(leaf_idx[ok])
        kept += ok.size
        used += wave
        rate = max(kept / used, 1.0 / cfg.max_attempts_factor)
        wave = min(int(math.ceil((n - kept) / rate * 1.2)) + 16, budget - used)
    if kept < n:
        raise SamplingExhausted(f"only {kept} of {n} boundary points after {used} candidates")
    pts = np.concatenate(kept_pts)[:n]
    nrm = np.concatenate(kept_nrm)[:n]
    inst = np.concatenate(kept_leaf)[:n].astype(np.uint8)
    kinds = np.array([int(leaf.kind) for leaf in sample.leaves], dtype=np.uint8)
    centroid, scale = np.zeros(3), 1.0
    if cfg.normalize:
        pts, centroid, scale = normalize_cloud(pts)
    return LabeledPointCloud(
        points=pts,
        semantic=kinds[inst],
        instance=inst,
        normals=nrm if cfg.with_normals else None,
        source=tuple(sample.provenance),
        centroid=centroid,
        scale=scale,
    )
