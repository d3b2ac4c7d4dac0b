"""Point-set distances and kernel two-sample statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._backend import kernels
from .errors import DimensionMismatch, EmptySet, InvalidParams

DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
BANDWIDTH_SUBSAMPLE = 1000
BANDWIDTH_SEED = 0
ROW_BLOCK = 1024


@dataclass(frozen=True)
class KernelConfig:
    """Equal-weight mixture of Gaussian RBF kernels with the given bandwidths."""

    bandwidths: tuple = (1.0,)

    def __post_init__(self):
        bw = tuple(float(s) for s in self.bandwidths)
        if not bw or not all(s > 0 and np.isfinite(s) for s in bw):
            raise InvalidParams(f"bandwidths must be positive: {self.bandwidths}")
        object.__setattr__(self, "bandwidths", bw)

    def to_dict(self):
        return {"bandwidths": list(self.bandwidths), "combine": "mean"}


@dataclass
class FeatureMatrix:
    data: np.ndarray
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidParams("feature matrix needs at least one row and one column")
        if not np.all(np.isfinite(self.data)):
            raise InvalidParams("feature matrix has non-finite entries")
        if self.row_ids is None:
            self.row_ids = np.arange(self.data.shape[0], dtype=np.uint64)
        else:
            self.row_ids = np.asarray(self.row_ids, dtype=np.uint64)
        if len(self.row_ids) != self.data.shape[0]:
            raise InvalidParams("row_ids length does not match the row count")

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def take(self, rows):
        rows = np.asarray(rows)
        return FeatureMatrix(self.data[rows], self.row_ids[rows])


def _points(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptySet("point sets must be non-empty (n, d) arrays")
    return np.ascontiguousarray(x)


def directed_sums(X, Y, accelerated=False):
    """(sum_x min_y |x-y|, sum_y min_x |x-y|)."""
    X, Y = _points(X), _points(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch("point sets differ in dimension")
    if accelerated:
        dxy, _ = cKDTree(Y).query(X)
        dyx, _ = cKDTree(X).query(Y)
        return float(dxy.sum()), float(dyx.sum())
    return kernels.directed_nn_sum(X, Y), kernels.directed_nn_sum(Y, X)


def chamfer(X, Y, accelerated=False):
    a, b = directed_sums(X, Y, accelerated)
    return a + b


def augmented_chamfer(X, Y, accelerated=False):
    a, b = directed_sums(X, Y, accelerated)
    return max(a, b)


def _as_data(x):
    if isinstance(x, FeatureMatrix):
        return x.data
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def sq_dists(A, B):
    """Pairwise squared Euclidean distances, clamped at zero."""
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    d = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    np.maximum(d, 0.0, out=d)
    return d


def kernel_block(A, B, cfg):
    d2 = sq_dists(A, B)
    out = np.zeros_like(d2)
    for s in cfg.bandwidths:
        out += np.exp(d2 * (-0.5 / (s * s)))
    out /= len(cfg.bandwidths)
    return out


def kernel(a, b, cfg):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"kernel inputs differ in dimension: {a.size} vs {b.size}")
    d2 = float(np.dot(a - b, a - b))
    return sum(np.exp(-d2 / (2.0 * s * s)) for s in cfg.bandwidths) / len(cfg.bandwidths)


def kernel_sum(A, B, cfg, block=ROW_BLOCK):
    """Sum of all kernel values between rows of A and rows of B."""
    return float(kernel_row_sums(A, B, cfg, block).sum())


def kernel_row_sums(A, B, cfg, block=ROW_BLOCK):
    """For each row of A, the sum of kernel values against every row of B."""
    A, B = _as_data(A), _as_data(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty(A.shape[0])
    for start in range(0, A.shape[0], block):
        stop = start + block
        acc = np.zeros(min(stop, A.shape[0]) - start)
        for bstart in range(0, B.shape[0], block):
            acc += kernel_block(A[start:stop], B[bstart:bstart + block], cfg).sum(axis=1)
        out[start:stop] = acc
    return out


def mmd_squared(D, T, cfg):
    """Biased (V-statistic) squared MMD between the rows of D and of T."""
    X, Y = _as_data(D), _as_data(T)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {X.shape[1]} vs {Y.shape[1]}")
    m, n = len(X), len(Y)
    xx = kernel_sum(X, X, cfg)
    xy = kernel_sum(X, Y, cfg)
    yy = kernel_sum(Y, Y, cfg)
    return xx / (m * m) - 2.0 * xy / (m * n) + yy / (n * n)


def mmd(D, T, cfg):
    return float(np.sqrt(max(mmd_squared(D, T, cfg), 0.0)))


def median_bandwidths(D, T, multipliers=DEFAULT_MULTIPLIERS,
                      subsample=BANDWIDTH_SUBSAMPLE, seed=BANDWIDTH_SEED):
    """Median pairwise distance of a seeded subsample of D and T, times each multiplier."""
    X = np.vstack([_as_data(D), _as_data(T)])
    if len(X) > subsample:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(len(X), size=subsample, replace=False))]
    d = np.sqrt(sq_dists(X, X)[np.triu_indices(len(X), k=1)])
    med = float(np.median(d)) if d.size else 1.0
    if not med > 0:
        med = 1.0
    return KernelConfig(tuple(med * k for k in multipliers))
