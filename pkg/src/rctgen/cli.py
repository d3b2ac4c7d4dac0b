"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from collections import Counter

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from ._backend import BACKEND
from .dataio import (
    DATASET_MAGIC,
    FEATURE_MAGIC,
    Manifest,
    default_manifest_path,
    export_ply,
    hash_dataset,
    iter_records,
    read_feature_file,
    write_feature_file,
)
from .distill import (
    DistillConfig,
    adaptivity_exact_all,
    adaptivity_proxy,
    run_distillation,
)
from .errors import RctError, ValidationFailed
from .features import DescriptorConfig, batch_features
from .metrics import KernelConfig, augmented_chamfer, median_bandwidths, mmd
from .pipeline import generate_dataset, generate_object
from .primitives import PrimitiveKind
from .rct import BooleanOp, RctSpec
from .sampler import SamplerConfig

EXACT_ORACLE_MAX_ROWS = 500
SMALL_DELTA_FRACTION = 0.05
VALIDATE_TOL = 1e-6


class UsageError(Exception):
    pass


def _range(text, kind=int):
    parts = text.split("..")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected MIN..MAX, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _names(enum_cls):
    def parse(text):
        try:
            return tuple(enum_cls.parse(t) for t in text.split(",") if t.strip())
        except KeyError as exc:
            raise argparse.ArgumentTypeError(f"unknown name {exc}") from exc
    return parse


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def read_config(path):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _load_features(path, descriptor, threads):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == FEATURE_MAGIC:
        return read_feature_file(path)
    if magic == DATASET_MAGIC:
        return batch_features(((i, c) for i, _, c in iter_records(path)), descriptor, threads)
    raise UsageError(f"{path} is neither a dataset nor a feature file")


def _descriptor(args):
    return DescriptorConfig(args.bins, args.pairs, not args.no_eigen, args.label_hist, args.pair_seed)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ------------------------------------------------------------------ commands


def cmd_generate(args):
    lo, hi = args.leaves
    if lo < 1 or hi < lo:
        raise UsageError(f"--leaves must satisfy 1 <= MIN <= MAX, got {lo}..{hi}")
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    if args.points < 1:
        raise UsageError("--points must be positive")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    if not os.path.isdir(out_dir):
        raise UsageError(f"output directory {out_dir} does not exist")
    spec = RctSpec((lo, hi), args.kinds, args.scale, args.ops, args.seed)
    cfg = SamplerConfig(n_points=args.points, with_normals=not args.no_normals)
    manifest_path = args.manifest or default_manifest_path(args.out)
    manifest, elapsed = generate_dataset(spec, cfg, args.count, args.out, manifest_path,
                                         threads=max(1, args.threads))
    rate = args.count / elapsed * 60.0 if elapsed > 0 else float("inf")
    print(json.dumps({"objects": manifest.object_count, "content_hash": manifest.content_hash,
                      "seconds": round(elapsed, 3), "objects_per_minute": round(rate, 1),
                      "backend": BACKEND}))
    return 0


def cmd_export(args):
    os.makedirs(args.out_dir, exist_ok=True)
    wanted = None if args.index is None else set(args.index)
    written = 0
    for index, _, cloud in iter_records(args.dataset):
        if wanted is not None and index not in wanted:
            continue
        export_ply(cloud, os.path.join(args.out_dir, f"{index:08d}.ply"), binary=not args.ascii)
        written += 1
    print(json.dumps({"exported": written}))
    return 0


def cmd_featurize(args):
    desc = _descriptor(args)
    fm = batch_features(((i, c) for i, _, c in iter_records(args.dataset)), desc, args.threads)
    write_feature_file(fm, args.out, desc.to_dict())
    print(json.dumps({"rows": fm.m, "dim": fm.d}))
    return 0


def _oracle_check(D, T, kcfg, rows):
    sub = D.take(np.arange(min(rows, D.m)))
    exact = adaptivity_exact_all(sub, T, kcfg)
    proxy = adaptivity_proxy(sub, T, kcfg)
    rho = float(spearmanr(proxy.scores, exact.scores).statistic)
    dist = mmd(sub, T, kcfg)
    condition = bool(np.max(np.abs(exact.scores)) <= SMALL_DELTA_FRACTION * dist)
    return {"rows": sub.m, "spearman": rho, "small_delta_condition": condition,
            "max_abs_delta": float(np.max(np.abs(exact.scores))), "mmd": dist}


def cmd_distill(args):
    desc = _descriptor(args)
    D = _load_features(args.source, desc, args.threads)
    T = _load_features(args.target, desc, args.threads)
    if D.d != T.d:
        print(f"error: feature dimensions differ ({D.d} vs {T.d})", file=sys.stderr)
        return 1
    kcfg = KernelConfig(tuple(args.bandwidths)) if args.bandwidths else median_bandwidths(D, T)
    dcfg = DistillConfig(args.ratio, args.threshold, args.epochs)
    report = run_distillation(D, T, kcfg, dcfg)
    out = report.to_dict()
    status = 0
    if args.exact_oracle:
        check = _oracle_check(D, T, kcfg, EXACT_ORACLE_MAX_ROWS)
        out["exact_oracle"] = check
        print(f"spearman rho (proxy vs exact, {check['rows']} rows): {check['spearman']:.6f}"
              f" small-delta condition: {check['small_delta_condition']}")
        if check["small_delta_condition"] and check["spearman"] < 0.99:
            status = 1
    _write_json(out, args.report)
    if args.out_ids:
        with open(args.out_ids, "w") as fh:
            fh.writelines(f"{int(i)}\n" for i in report.final_ids)
    return status


def cmd_stats(args):
    leaf_counts = Counter()
    ops = Counter()
    kinds = Counter()
    clouds = []
    total_points = 0
    n = 0
    for index, sample, cloud in iter_records(args.dataset):
        n += 1
        leaf_counts[sample.n_leaves] += 1
        ops.update(op.name.lower() for op in sample.internal_ops)
        kinds.update(int(v) for v in cloud.semantic)
        total_points += len(cloud.semantic)
        if len(clouds) < args.diversity_sample:
            clouds.append(cloud.points)
    freq = {PrimitiveKind(k).name.lower(): kinds[k] / total_points for k in sorted(kinds)} if total_points else {}
    diversity = None
    if len(clouds) >= 2:
        nn = []
        for i, a in enumerate(clouds):
            nn.append(min(augmented_chamfer(a, b, accelerated=True) / len(a)
                          for j, b in enumerate(clouds) if j != i))
        diversity = {"objects": len(clouds), "mean_nn_acd_per_point": float(np.mean(nn)),
                     "min": float(np.min(nn)), "max": float(np.max(nn))}
    _write_json({
        "objects": n,
        "leaf_count_histogram": {str(k): v for k, v in sorted(leaf_counts.items())},
        "op_histogram": dict(sorted(ops.items())),
        "semantic_frequencies": freq,
        "acd_nearest_neighbour": diversity,
    }, args.out)
    return 0


def validate_dataset(path, manifest_path=None, tol=VALIDATE_TOL):
    """Return a list of invariant breaches (empty when the file is sound)."""
    problems = []
    manifest_path = manifest_path or default_manifest_path(path)
    if os.path.exists(manifest_path):
        manifest = Manifest.read(manifest_path)
        actual = hash_dataset(path)
        if actual != manifest.content_hash:
            problems.append(f"content hash {actual} != manifest {manifest.content_hash}")
    count = 0
    for index, sample, cloud in iter_records(path):
        count += 1
        kinds = np.array([int(p.kind) for p in sample.leaves])
        if not np.array_equal(cloud.semantic, kinds[cloud.instance]):
            problems.append(f"object {index}: semantic labels disagree with instance kinds")
        # allow for float32 storage of normalised coordinates
        slack = tol + 4.0 * np.finfo(np.float32).eps * cloud.scale
        codes = sample.classify(cloud.raw_points(), slack)
        bad = int(np.count_nonzero(codes != 1))
        if bad:
            problems.append(f"object {index}: {bad} points off the boundary")
        norms = np.sqrt((cloud.points ** 2).sum(axis=1))
        if abs(norms.max() - 1.0) > 1e-5 or np.abs(cloud.points.mean(axis=0)).max() > 1e-5:
            problems.append(f"object {index}: cloud is not normalised")
    return problems, count


def cmd_validate(args):
    problems, count = validate_dataset(args.dataset, args.manifest)
    _write_json({"objects": count, "ok": not problems, "problems": problems[:100]}, None)
    if problems:
        raise ValidationFailed(f"{len(problems)} invariant breaches")
    return 0


def _fit_exponent(sizes, times):
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def bench_generation(leaves, per_l, points, seed):
    rows = []
    cfg = SamplerConfig(n_points=points)
    for l in leaves:
        spec = RctSpec((l, l), master_seed=seed)
        generate_object(spec, cfg, 0)
        t0 = time.perf_counter()
        for i in range(per_l):
            generate_object(spec, cfg, i)
        total = time.perf_counter() - t0
        rows.append({"benchmark": "generate", "size": l, "n": points,
                     "seconds": total / per_l, "reps": per_l})
    return rows


def bench_distill(sizes, n, dim, exact_rows, seed):
    rng = np.random.default_rng(seed)
    from .metrics import FeatureMatrix

    T = FeatureMatrix(rng.standard_normal((n, dim)) + 1.0)
    rows = []
    kcfg = KernelConfig((1.0, 2.0, 4.0))
    for m in sizes:
        D = FeatureMatrix(rng.standard_normal((m, dim)))
        t0 = time.perf_counter()
        adaptivity_proxy(D, T, kcfg)
        rows.append({"benchmark": "proxy_all_rows", "size": m, "n": n,
                     "seconds": time.perf_counter() - t0, "reps": 1})
        if exact_rows:
            t0 = time.perf_counter()
            adaptivity_exact_all(D, T, kcfg, rows=range(exact_rows))
            per_row = (time.perf_counter() - t0) / exact_rows
            rows.append({"benchmark": "exact_all_rows", "size": m, "n": n,
                         "seconds": per_row * m, "reps": exact_rows})
    return rows


def cmd_bench(args):
    rows = bench_generation(range(args.leaves[0], args.leaves[1] + 1), args.objects,
                            args.points, args.seed)
    if args.sizes:
        rows += bench_distill(args.sizes, args.target_size, args.dim, args.exact_rows, args.seed)
    fields = ["benchmark", "size", "n", "seconds", "reps", "backend"]
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "backend": BACKEND})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


# ------------------------------------------------------------------- parser


def _add_descriptor_flags(p):
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--pairs", type=int, default=4096)
    p.add_argument("--no-eigen", action="store_true")
    p.add_argument("--label-hist", action="store_true")
    p.add_argument("--pair-seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="rctgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rctgen {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("generate", help="generate a labelled point-cloud dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leaves", type=_range, default=(1, 6))
    p.add_argument("--kinds", type=_names(PrimitiveKind), default=tuple(PrimitiveKind))
    p.add_argument("--ops", type=_names(BooleanOp), default=(BooleanOp.UNION,))
    p.add_argument("--scale", type=lambda s: _range(s, float), default=(0.25, 1.0))
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-normals", action="store_true")
    p.set_defaults(func=cmd_generate)
    subs["generate"] = p

    p = sub.add_parser("export", help="write dataset objects as PLY files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--index", type=int, nargs="*")
    p.add_argument("--ascii", action="store_true")
    p.set_defaults(func=cmd_export)
    subs["export"] = p

    p = sub.add_parser("featurize", help="compute descriptor features for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_descriptor_flags(p)
    p.set_defaults(func=cmd_featurize)
    subs["featurize"] = p

    p = sub.add_parser("distill", help="prune a source set towards a target set")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--threshold", type=int, default=10000)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--bandwidths", type=float, nargs="*")
    p.add_argument("--exact-oracle", action="store_true")
    p.add_argument("--report")
    p.add_argument("--out-ids")
    _add_descriptor_flags(p)
    p.set_defaults(func=cmd_distill)
    subs["distill"] = p

    p = sub.add_parser("stats", help="dataset histograms and diversity summary")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--diversity-sample", type=int, default=64)
    p.set_defaults(func=cmd_stats)
    subs["stats"] = p

    p = sub.add_parser("validate", help="re-check dataset invariants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_validate)
    subs["validate"] = p

    p = sub.add_parser("bench", help="time generation and distillation scaling (CSV)")
    p.add_argument("--out")
    p.add_argument("--leaves", type=_range, default=(1, 6))
    p.add_argument("--objects", type=int, default=50)
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--sizes", type=int, nargs="*", default=[])
    p.add_argument("--target-size", type=int, default=1000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--exact-rows", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    subs["bench"] = p

    for p in subs.values():
        p.add_argument("--config", help="key=value file; command-line flags take precedence")
    return parser, subs


def _config_path(argv):
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(parser, subs, argv):
    """Parse ``argv`` with config-file values installed as subcommand defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    command = next((a for a in argv if a in subs), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    p = subs[command]
    known = {a.dest: a for a in p._actions}
    defaults = {}
    for key, value in read_config(path).items():
        if key not in known or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = known[key]
        if action.nargs == 0:
            defaults[key] = _bool(value)
        elif action.nargs in ("*", "+"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            defaults[key] = value
    p.set_defaults(**defaults)
    for action in p._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def main(argv=None):
    parser, subs = build_parser()
    try:
        try:
            args = _apply_config(parser, subs, argv)
        except SystemExit as exc:  # argparse reports usage errors this way
            return exc.code if isinstance(exc.code, int) else 2
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    except (RctError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
