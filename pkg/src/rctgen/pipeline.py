"""Seeded batch generation; output is independent of the worker count."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

from .dataio import DatasetWriter, Manifest, default_manifest_path
from .rct import object_rng, sample_rct
from .sampler import SamplerConfig, sample_labeled_cloud

SAMPLER_STREAM = 1
CHUNK = 256


def generate_object(spec, cfg, index):
    sample = sample_rct(spec, index)
    rng = object_rng(spec.master_seed, index, stream=SAMPLER_STREAM)
    return sample, sample_labeled_cloud(sample, cfg, rng)


def iter_objects(spec, cfg, indices, threads=1):
    """Yield ``(index, sample, cloud)`` in the order of ``indices``."""
    indices = list(indices)
    if threads <= 1:
        for i in indices:
            yield (i, *generate_object(spec, cfg, i))
        return
    with ThreadPoolExecutor(threads) as pool:
        for start in range(0, len(indices), CHUNK):
            chunk = indices[start:start + CHUNK]
            for i, res in zip(chunk, pool.map(lambda j: generate_object(spec, cfg, j), chunk)):
                yield (i, *res)


def generate_dataset(spec, cfg, count, path, manifest_path=None, threads=1, start=0):
    """Generate objects ``start .. start+count-1`` into a dataset file.

    Returns ``(manifest, seconds)``. A failed run leaves no partial file.
    """
    cfg = cfg or SamplerConfig()
    t0 = time.perf_counter()
    with DatasetWriter(path, cfg.n_points, cfg.with_normals) as writer:
        for i, sample, cloud in iter_objects(spec, cfg, range(start, start + count), threads):
            writer.add(i, sample, cloud)
    elapsed = time.perf_counter() - t0
    manifest = Manifest(spec.to_dict(), cfg.to_dict(), writer.count, writer.content_hash)
    manifest.write(manifest_path or default_manifest_path(path))
    return manifest, elapsed
