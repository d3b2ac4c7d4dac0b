"""Randomized constructive trees.

A tree is a full binary tree whose leaves are posed primitives and whose
internal nodes carry a regularized boolean operation. Every internal node
evaluates ``right <op> (left + delta)``: the left subtree is translated so
that a random interior point of it lands on a random interior point of the
right subtree, which keeps the operands overlapping.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from ._backend import kernels
from .errors import DegenerateObject, EmptySolid, InvalidParams, TreeOverflow
from .primitives import Membership, Pose, PrimitiveInstance, PrimitiveKind, sample_params

MAX_CATALAN_LEAVES = 30
VOLUME_BATCH = 256
MAX_VOLUME_REJECTIONS = 100_000
MAX_OBJECT_REDRAWS = 20

_MASK64 = 0xFFFFFFFFFFFFFFFF


class BooleanOp(enum.IntEnum):
    UNION = 0
    INTERSECTION = 1
    DIFFERENCE = 2

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        return cls[str(name).strip().upper()]


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def object_seed(master_seed, object_index, stream=0):
    """Order-independent 64-bit seed for one object (and one purpose stream)."""
    h = splitmix64((int(master_seed) & _MASK64) ^ splitmix64(int(object_index) & _MASK64))
    if stream:
        h = splitmix64(h ^ (int(stream) & _MASK64))
    return h


def object_rng(master_seed, object_index, stream=0):
    return np.random.Generator(np.random.PCG64(object_seed(master_seed, object_index, stream)))


# --------------------------------------------------------------------------- shapes


@dataclass(frozen=True)
class TreeShape:
    """Full binary tree stored as child index arrays (-1 marks a leaf)."""

    left: tuple
    right: tuple
    root: int

    def __post_init__(self):
        n = len(self.left)
        if n != len(self.right) or n % 2 == 0:
            raise InvalidParams("a full binary tree has an odd node count")
        for a, b in zip(self.left, self.right):
            if (a < 0) != (b < 0):
                raise InvalidParams("every internal node needs exactly two children")

    @property
    def n_nodes(self):
        return len(self.left)

    @property
    def n_leaves(self):
        return (self.n_nodes + 1) // 2

    def is_leaf(self, node):
        return self.left[node] < 0

    @cached_property
    def parent(self):
        par = [-1] * self.n_nodes
        for node in range(self.n_nodes):
            if not self.is_leaf(node):
                par[self.left[node]] = node
                par[self.right[node]] = node
        return tuple(par)

    @cached_property
    def leaf_nodes(self):
        """Leaf node ids in left-to-right order; position is the leaf index."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if self.is_leaf(node):
                out.append(node)
            else:
                stack.append(self.right[node])
                stack.append(self.left[node])
        return tuple(out)

    @cached_property
    def leaf_index(self):
        idx = [-1] * self.n_nodes
        for i, node in enumerate(self.leaf_nodes):
            idx[node] = i
        return tuple(idx)

    def post_order(self, node=None):
        """Internal nodes of the subtree at ``node``, children before parents."""
        node = self.root if node is None else node
        out = []
        stack = [(node, False)]
        while stack:
            cur, done = stack.pop()
            if self.is_leaf(cur):
                continue
            if done:
                out.append(cur)
            else:
                stack.append((cur, True))
                stack.append((self.right[cur], False))
                stack.append((self.left[cur], False))
        return out

    @cached_property
    def internal_nodes(self):
        return tuple(self.post_order())

    def subtree_leaves(self, node):
        """Leaf indices under ``node``."""
        out = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if self.is_leaf(cur):
                out.append(self.leaf_index[cur])
            else:
                stack.append(self.left[cur])
                stack.append(self.right[cur])
        return sorted(out)

    def signature(self, node=None):
        """Label-free plane shape, e.g. ``((..).)`` for a 3-leaf left comb."""
        node = self.root if node is None else node
        if self.is_leaf(node):
            return "."
        return "(" + self.signature(self.left[node]) + self.signature(self.right[node]) + ")"


def count_tree_shapes(l):
    """Number of plane full binary trees with ``l`` leaves: Catalan(l - 1)."""
    if l < 1:
        raise InvalidParams("leaf count must be at least 1")
    if l > MAX_CATALAN_LEAVES:
        raise TreeOverflow(f"leaf count {l} exceeds {MAX_CATALAN_LEAVES}")
    n = l - 1
    return math.comb(2 * n, n) // (n + 1)


def sample_tree_shape(l, rng):
    """Uniform random plane binary tree with ``l`` leaves (Remy insertion)."""
    if l < 1:
        raise InvalidParams("leaf count must be at least 1")
    left = [-1]
    right = [-1]
    parent = [-1]
    root = 0
    for _ in range(l - 1):
        target = int(rng.integers(len(left)))
        inner = len(left)
        leaf = inner + 1
        left += [-1, -1]
        right += [-1, -1]
        parent += [-1, -1]
        up = parent[target]
        if up < 0:
            root = inner
        elif left[up] == target:
            left[up] = inner
        else:
            right[up] = inner
        parent[inner] = up
        if rng.random() < 0.5:
            left[inner], right[inner] = target, leaf
        else:
            left[inner], right[inner] = leaf, target
        parent[target] = inner
        parent[leaf] = inner
    return TreeShape(tuple(left), tuple(right), root)


def enumerate_tree_shapes(l):
    """All plane-shape signatures with ``l`` leaves (test oracle)."""
    if l == 1:
        return ["."]
    out = []
    for k in range(1, l):
        for a in enumerate_tree_shapes(k):
            for b in enumerate_tree_shapes(l - k):
                out.append("(" + a + b + ")")
    return out


# ------------------------------------------------------------------ rotations


def quaternion_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def sample_rotation_uniform(rng):
    """Haar-uniform rotation matrix from a normalised Gaussian quaternion."""
    while True:
        q = rng.standard_normal(4)
        norm = np.linalg.norm(q)
        if norm > 1e-12:
            return quaternion_to_matrix(q / norm)


# ------------------------------------------------------------------ programs


class Program(NamedTuple):
    """Flat arrays consumed by ``kernels.classify_tree``."""

    leaf_kind: np.ndarray
    leaf_params: np.ndarray
    leaf_rot: np.ndarray
    leaf_trans: np.ndarray
    leaf_scale: np.ndarray
    node_leaf: np.ndarray
    post_nodes: np.ndarray
    post_ops: np.ndarray
    post_left: np.ndarray
    post_right: np.ndarray
    root: int
    lo: np.ndarray
    hi: np.ndarray

    def classify(self, points, tol, forced=None):
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if forced is None:
            forced = np.full(len(points), -1, dtype=np.int32)
        else:
            forced = np.ascontiguousarray(forced, dtype=np.int32)
        return kernels.classify_tree(
            points, self.leaf_kind, self.leaf_params, self.leaf_rot,
            self.leaf_trans, self.leaf_scale, self.node_leaf, self.post_nodes,
            self.post_ops, self.post_left, self.post_right, self.root, forced,
            float(tol))


def build_program(shape, kinds, params, rots, trans, scales, ops, node=None):
    """Compile the subtree at ``node`` (default root) into kernel arrays.

    ``ops`` maps internal node id -> BooleanOp; leaf arrays are indexed by
    leaf index (left-to-right order).
    """
    node = shape.root if node is None else node
    members = shape.subtree_leaves(node)
    node_leaf = np.full(shape.n_nodes, -1, dtype=np.int32)
    for i in members:
        node_leaf[shape.leaf_nodes[i]] = i
    post = shape.post_order(node)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    sub_t = trans[members]
    sub_s = scales[members][:, None]
    return Program(
        leaf_kind=np.ascontiguousarray(kinds, dtype=np.int32),
        leaf_params=np.ascontiguousarray(params, dtype=np.float64),
        leaf_rot=np.ascontiguousarray(rots, dtype=np.float64),
        leaf_trans=trans,
        leaf_scale=scales,
        node_leaf=node_leaf,
        post_nodes=np.array(post, dtype=np.int32),
        post_ops=np.array([int(ops[n]) for n in post], dtype=np.int32),
        post_left=np.array([shape.left[n] for n in post], dtype=np.int32),
        post_right=np.array([shape.right[n] for n in post], dtype=np.int32),
        root=int(node),
        lo=(sub_t - sub_s).min(axis=0),
        hi=(sub_t + sub_s).max(axis=0),
    )


def _draw_interior(program, rng, counter=None):
    """Uniform interior point of the program's solid by box rejection."""
    rejected = 0
    while rejected < MAX_VOLUME_REJECTIONS:
        cand = rng.uniform(program.lo, program.hi, size=(VOLUME_BATCH, 3))
        codes = program.classify(cand, 0.0)
        hits = np.flatnonzero(codes == Membership.IN)
        if counter is not None:
            counter[0] += VOLUME_BATCH if hits.size == 0 else int(hits[0]) + 1
            counter[1] += 0 if hits.size == 0 else 1
        if hits.size:
            return cand[hits[0]].copy()
        rejected += VOLUME_BATCH
    raise EmptySolid(f"no interior point after {rejected} consecutive rejections")


# ------------------------------------------------------------------ samples


@dataclass(frozen=True)
class RctSpec:
    leaf_range: tuple = (1, 6)
    kinds: tuple = tuple(PrimitiveKind)
    scale_range: tuple = (0.25, 1.0)
    ops: tuple = (BooleanOp.UNION,)
    master_seed: int = 0

    def __post_init__(self):
        lo, hi = (int(v) for v in self.leaf_range)
        if lo < 1 or hi < lo:
            raise InvalidParams(f"invalid leaf range {self.leaf_range}")
        kinds = tuple(PrimitiveKind.parse(k) for k in self.kinds)
        ops = tuple(BooleanOp.parse(o) for o in self.ops)
        if not kinds:
            raise InvalidParams("kinds must be non-empty")
        if not ops:
            raise InvalidParams("ops must be non-empty")
        s_lo, s_hi = (float(v) for v in self.scale_range)
        if not (0 < s_lo <= s_hi):
            raise InvalidParams(f"invalid scale range {self.scale_range}")
        object.__setattr__(self, "leaf_range", (lo, hi))
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "scale_range", (s_lo, s_hi))
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)

    def to_dict(self):
        return {
            "leaf_range": list(self.leaf_range),
            "kinds": [k.name.lower() for k in self.kinds],
            "scale_range": list(self.scale_range),
            "ops": [o.name.lower() for o in self.ops],
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["leaf_range"]), tuple(d["kinds"]), tuple(d["scale_range"]),
                   tuple(d["ops"]), d["master_seed"])


@dataclass(frozen=True)
class RctSample:
    shape: TreeShape
    leaves: tuple
    internal_ops: tuple
    anchors: np.ndarray
    anchor_points: np.ndarray = None
    provenance: tuple = (0, 0)

    def __post_init__(self):
        l = self.shape.n_leaves
        if len(self.leaves) != l:
            raise InvalidParams("leaf count does not match the tree shape")
        if len(self.internal_ops) != l - 1:
            raise InvalidParams("need one op per internal node")
        anchors = np.asarray(self.anchors, dtype=np.float64).reshape(l - 1, 3)
        object.__setattr__(self, "anchors", anchors)
        if self.anchor_points is not None:
            pts = np.asarray(self.anchor_points, dtype=np.float64).reshape(l - 1, 3)
            object.__setattr__(self, "anchor_points", pts)
        object.__setattr__(self, "internal_ops",
                           tuple(BooleanOp.parse(o) for o in self.internal_ops))

    @property
    def n_leaves(self):
        return self.shape.n_leaves

    @cached_property
    def ops_by_node(self):
        return dict(zip(self.shape.internal_nodes, self.internal_ops))

    def program(self, node=None):
        if node is None:
            return self._root_program
        return self._program(node)

    def _program(self, node):
        leaves = self.leaves
        return build_program(
            self.shape,
            [int(p.kind) for p in leaves],
            np.array([p.padded_params() for p in leaves]).reshape(-1, 4),
            np.array([p.pose.rotation for p in leaves]).reshape(-1, 3, 3),
            np.array([p.pose.translation for p in leaves]).reshape(-1, 3),
            [p.pose.scale for p in leaves],
            self.ops_by_node,
            node,
        )

    @cached_property
    def _root_program(self):
        return self._program(None)

    def classify(self, points, tol, forced=None, node=None):
        return self.program(node).classify(points, tol, forced)

    @cached_property
    def subtrahend_parity(self):
        """Per leaf: True when it sits an odd number of times in a subtracted operand."""
        flip = np.zeros(self.n_leaves, dtype=bool)
        for node, op in self.ops_by_node.items():
            if op == BooleanOp.DIFFERENCE:
                flip[self.shape.subtree_leaves(self.shape.left[node])] ^= True
        return flip

    def to_dict(self):
        return {
            "left": list(self.shape.left),
            "right": list(self.shape.right),
            "root": self.shape.root,
            "leaves": [
                {
                    "kind": p.kind.name.lower(),
                    "params": list(p.params),
                    "rotation": p.pose.rotation.tolist(),
                    "translation": p.pose.translation.tolist(),
                    "scale": p.pose.scale,
                }
                for p in self.leaves
            ],
            "ops": [o.name.lower() for o in self.internal_ops],
            "anchors": self.anchors.tolist(),
            "anchor_points": None if self.anchor_points is None else self.anchor_points.tolist(),
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d):
        shape = TreeShape(tuple(d["left"]), tuple(d["right"]), int(d["root"]))
        leaves = tuple(
            PrimitiveInstance(leaf["kind"], tuple(leaf["params"]),
                              Pose(leaf["rotation"], leaf["translation"], leaf["scale"]))
            for leaf in d["leaves"]
        )
        return cls(shape, leaves, tuple(d["ops"]), d["anchors"], d.get("anchor_points"),
                   tuple(d.get("provenance", (0, 0))))


def compose(op, first, second, offset=(0.0, 0.0, 0.0)):
    """Two-leaf sample computing ``first <op> (second + offset)``.

    Convenience for building small trees by hand; ``first`` becomes the
    right child.
    """
    second = PrimitiveInstance(second.kind, second.params, second.pose.translated(offset))
    shape = TreeShape((1, -1, -1), (2, -1, -1), 0)
    return RctSample(shape, (second, first), (op,), np.asarray(offset, dtype=float))


def single(instance):
    return RctSample(TreeShape((-1,), (-1,), 0), (instance,), (), np.zeros((0, 3)))


def sample_volume_point(sample, rng, node=None):
    """Uniform strictly-interior point of the solid at ``node`` (default root)."""
    return _draw_interior(sample.program(node), rng)


def estimate_volume_acceptance(sample, rng, n_draws, node=None):
    """Fraction of bounding-box candidates accepted while drawing ``n_draws`` points."""
    counter = [0, 0]
    program = sample.program(node)
    for _ in range(n_draws):
        _draw_interior(program, rng, counter)
    return counter[1] / counter[0]


def _draw_object(spec, rng, provenance):
    lo, hi = spec.leaf_range
    l = int(rng.integers(lo, hi + 1))
    shape = sample_tree_shape(l, rng)
    kinds = []
    params = np.zeros((l, 4))
    raw_params = []
    rots = np.empty((l, 3, 3))
    scales = np.empty(l)
    for i in range(l):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        theta = sample_params(kind, rng)
        rots[i] = sample_rotation_uniform(rng)
        scales[i] = rng.uniform(*spec.scale_range)
        kinds.append(int(kind))
        raw_params.append(theta)
        params[i, : len(theta)] = theta
    trans = np.zeros((l, 3))
    ops = {}
    anchors = {}
    anchor_pts = {}
    for node in shape.internal_nodes:
        ops[node] = spec.ops[int(rng.integers(len(spec.ops)))]
        lchild, rchild = shape.left[node], shape.right[node]
        p_l = _draw_interior(build_program(shape, kinds, params, rots, trans, scales, ops, lchild), rng)
        p_r = _draw_interior(build_program(shape, kinds, params, rots, trans, scales, ops, rchild), rng)
        delta = p_r - p_l
        trans[shape.subtree_leaves(lchild)] += delta
        for inner in shape.post_order(lchild):
            anchor_pts[inner] = anchor_pts[inner] + delta
        anchors[node] = delta
        anchor_pts[node] = p_r
    if any(op != BooleanOp.UNION for op in ops.values()):
        _draw_interior(build_program(shape, kinds, params, rots, trans, scales, ops), rng)
    order = shape.internal_nodes
    leaves = tuple(
        PrimitiveInstance(PrimitiveKind(kinds[i]), raw_params[i], Pose(rots[i], trans[i], scales[i]))
        for i in range(l)
    )
    return RctSample(
        shape,
        leaves,
        tuple(ops[n] for n in order),
        np.array([anchors[n] for n in order]).reshape(-1, 3),
        np.array([anchor_pts[n] for n in order]).reshape(-1, 3),
        provenance,
    )


def sample_rct(spec, object_index):
    """Draw object ``object_index`` of the dataset described by ``spec``.

    Pure function of its arguments. Empty results are re-drawn up to
    MAX_OBJECT_REDRAWS times before DegenerateObject is raised.
    """
    rng = object_rng(spec.master_seed, object_index)
    provenance = (spec.master_seed, int(object_index))
    for _ in range(MAX_OBJECT_REDRAWS):
        try:
            return _draw_object(spec, rng, provenance)
        except EmptySolid:
            continue
    raise DegenerateObject(f"object {object_index} was empty after {MAX_OBJECT_REDRAWS} re-draws")


@dataclass
class ValidityReport:
    non_empty: bool
    bounded: bool
    leaf_count: int
    op_histogram: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.non_empty and self.bounded


def validate_rct(sample, rng=None):
    """Non-emptiness (one interior draw) and boundedness (finite leaf spheres)."""
    if rng is None:
        rng = object_rng(sample.provenance[0], sample.provenance[1], stream=2)
    try:
        _draw_interior(sample.program(), rng)
        non_empty = True
    except EmptySolid:
        non_empty = False
    bounded = all(
        np.all(np.isfinite(p.pose.translation)) and math.isfinite(p.pose.scale)
        for p in sample.leaves
    )
    hist = Counter(op.name.lower() for op in sample.internal_ops)
    return ValidityReport(non_empty, bounded, sample.n_leaves, dict(hist))
