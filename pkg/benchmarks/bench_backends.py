"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_backends.py [--reps 5] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

import numpy as np

from rctgen import dataio, metrics, primitives, rct
from rctgen._backend import ckernels, pykernels
from rctgen.pipeline import generate_object
from rctgen.rct import BooleanOp, RctSpec, sample_rct
from rctgen.sampler import SamplerConfig


USERS = [m for m in (dataio, metrics, primitives, rct) if hasattr(m, "kernels")]


def best_of(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def classify_case(mod, n_points):
    s = sample_rct(RctSpec((6, 6), ops=tuple(BooleanOp), master_seed=1), 0)
    p = s.program()
    rng = np.random.default_rng(0)
    pts = rng.uniform(p.lo, p.hi, (n_points, 3))
    forced = np.full(n_points, -1, dtype=np.int32)
    return lambda: mod.classify_tree(pts, p.leaf_kind, p.leaf_params, p.leaf_rot, p.leaf_trans,
                                     p.leaf_scale, p.node_leaf, p.post_nodes, p.post_ops,
                                     p.post_left, p.post_right, p.root, forced, 1e-7)


def sdf_case(mod, n_points):
    pts = np.random.default_rng(1).uniform(-1, 1, (n_points, 3))
    params = np.array([0.6, 0.2, 0.0])
    return lambda: mod.canonical_sdf(4, params, pts)


def nn_case(mod, n_points):
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(n_points, 3)), rng.normal(size=(n_points, 3))
    return lambda: mod.directed_nn_sum(X, Y)


def fnv_case(mod, n_bytes):
    data = np.random.default_rng(3).integers(0, 256, n_bytes).astype(np.uint8)
    return lambda: mod.fnv1a64(data)


def end_to_end(mod, count=50):
    """Generate ``count`` objects of 1024 points with every module bound to ``mod``."""
    saved = {m: m.kernels for m in USERS}
    for m in USERS:
        m.kernels = mod
    try:
        spec, cfg = RctSpec((1, 6), master_seed=5), SamplerConfig(1024)
        t0 = time.perf_counter()
        for i in range(count):
            generate_object(spec, cfg, i)
        return time.perf_counter() - t0
    finally:
        for m, k in saved.items():
            m.kernels = k


CASES = [
    ("classify_tree_l6", classify_case, 8192),
    ("canonical_sdf_torus", sdf_case, 100_000),
    ("directed_nn_sum", nn_case, 1024),
    ("fnv1a64", fnv_case, 1 << 20),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if ckernels is None:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
    rows = []
    for name, make, size in CASES:
        py = best_of(make(pykernels, size), args.reps)
        cy = best_of(make(ckernels, size), args.reps) if ckernels is not None else float("nan")
        rows.append({"kernel": name, "size": size, "python_s": py, "cython_s": cy, "speedup": py / cy})
    py = end_to_end(pykernels)
    cy = end_to_end(ckernels) if ckernels is not None else float("nan")
    rows.append({"kernel": "generate_object_x50", "size": 50, "python_s": py, "cython_s": cy,
                 "speedup": py / cy})
    print(f"{'kernel':<22}{'size':>9}{'numpy s':>12}{'cython s':>12}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<22}{r['size']:>9}{r['python_s']:>12.5f}{r['cython_s']:>12.5f}{r['speedup']:>9.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
