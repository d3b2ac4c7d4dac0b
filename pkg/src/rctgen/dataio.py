"""On-disk formats: chunked dataset files, manifests, feature files and PLY.

All binary integers and floats are little-endian. Coordinates are stored as
float32; the embedded per-record JSON carries the full tree plus the
normalisation transform so raw coordinates can be recovered.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._backend import kernels
from .errors import BadMagic, HeterogeneousRecords, LengthMismatch
from .metrics import FeatureMatrix
from .rct import RctSample
from .sampler import LabeledPointCloud

DATASET_MAGIC = b"P3DS"
FEATURE_MAGIC = b"P3DF"
FORMAT_VERSION = 1
FLAG_NORMALS = 1

_HEADER = struct.Struct("<4sHQIH")
_RECORD_HEAD = struct.Struct("<QI")
_FEATURE_HEADER = struct.Struct("<4sQI")

FNV_OFFSET = 0xCBF29CE484222325


def point_dtype(with_normals):
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if with_normals:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    fields += [("semantic", "u1"), ("instance", "u1")]
    return np.dtype(fields)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def fnv1a64(data, h=FNV_OFFSET):
    return int(kernels.fnv1a64(np.frombuffer(bytes(data), dtype=np.uint8), h))


def record_json(sample, cloud):
    d = sample.to_dict()
    d["normalization"] = {"centroid": np.asarray(cloud.centroid, dtype=float).tolist(),
                          "scale": float(cloud.scale)}
    return d


def encode_record(index, sample, cloud, n_points, with_normals):
    if len(cloud.points) != n_points:
        raise HeterogeneousRecords(f"object {index} has {len(cloud.points)} points, expected {n_points}")
    if (cloud.normals is not None) != with_normals:
        raise HeterogeneousRecords(f"object {index} disagrees on the normals flag")
    blob = canonical_json(record_json(sample, cloud))
    arr = np.empty(n_points, dtype=point_dtype(with_normals))
    arr["x"], arr["y"], arr["z"] = cloud.points.T
    if with_normals:
        arr["nx"], arr["ny"], arr["nz"] = cloud.normals.T
    arr["semantic"] = cloud.semantic
    arr["instance"] = cloud.instance
    return _RECORD_HEAD.pack(int(index), len(blob)) + blob + arr.tobytes()


@dataclass
class Manifest:
    spec: dict
    sampler: dict
    object_count: int
    content_hash: str
    format_version: int = FORMAT_VERSION
    tool_version: str = __version__
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "spec": self.spec,
            "sampler": self.sampler,
            "object_count": self.object_count,
            "content_hash": self.content_hash,
            "tool_version": self.tool_version,
            "extra": self.extra,
        }

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["spec"], d["sampler"], d["object_count"], d["content_hash"],
                   d["format_version"], d["tool_version"], d.get("extra", {}))


def default_manifest_path(path):
    return str(path) + ".manifest.json"


class DatasetWriter:
    """Streams records in strictly ascending object index order."""

    def __init__(self, path, n_points, with_normals):
        self.path = str(path)
        self.n_points = int(n_points)
        self.with_normals = bool(with_normals)
        self.count = 0
        self.hash = FNV_OFFSET
        self._last = -1
        self._fh = open(self.path, "wb")
        self._fh.write(self._header())

    def _header(self):
        return _HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, self.count, self.n_points,
                            FLAG_NORMALS if self.with_normals else 0)

    def add(self, index, sample, cloud):
        if index <= self._last:
            raise HeterogeneousRecords(f"object index {index} is not ascending after {self._last}")
        rec = encode_record(index, sample, cloud, self.n_points, self.with_normals)
        self._fh.write(rec)
        self.hash = fnv1a64(rec, self.hash)
        self._last = index
        self.count += 1

    def close(self):
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(self._header())
        self._fh.close()

    @property
    def content_hash(self):
        return f"{self.hash:016x}"

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        if exc_type is not None:
            try:
                os.remove(self.path)
            except OSError:
                pass
        return False


def write_dataset(objects, path, manifest_path=None, spec=None, sampler=None, n_points=None,
                  with_normals=None):
    """Write ``(index, sample, cloud)`` triples sorted by index; return the Manifest."""
    items = sorted(objects, key=lambda t: int(t[0]))
    if items:
        first = items[0][2]
        n_points = len(first.points) if n_points is None else n_points
        with_normals = (first.normals is not None) if with_normals is None else with_normals
    with DatasetWriter(path, n_points or 0, bool(with_normals)) as writer:
        for index, sample, cloud in items:
            writer.add(int(index), sample, cloud)
    manifest = Manifest(spec or {}, sampler or {}, writer.count, writer.content_hash)
    manifest.write(manifest_path or default_manifest_path(path))
    return manifest


@dataclass
class DatasetHeader:
    version: int
    object_count: int
    n_points: int
    with_normals: bool


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise LengthMismatch(f"file truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def read_header(fh):
    magic, version, count, n_points, flags = _HEADER.unpack(_read_exact(fh, _HEADER.size))
    if magic != DATASET_MAGIC:
        raise BadMagic(f"not a dataset file (magic {magic!r})")
    return DatasetHeader(version, count, n_points, bool(flags & FLAG_NORMALS))


def iter_records(path, raw=False):
    """Yield ``(index, sample, cloud)`` per record (``raw=True`` yields bytes too)."""
    with open(path, "rb") as fh:
        head = read_header(fh)
        dtype = point_dtype(head.with_normals)
        for _ in range(head.object_count):
            rec_head = _read_exact(fh, _RECORD_HEAD.size)
            index, jlen = _RECORD_HEAD.unpack(rec_head)
            blob = _read_exact(fh, jlen)
            body = _read_exact(fh, dtype.itemsize * head.n_points)
            meta = json.loads(blob)
            sample = RctSample.from_dict(meta)
            arr = np.frombuffer(body, dtype=dtype)
            pts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
            nrm = None
            if head.with_normals:
                nrm = np.stack([arr["nx"], arr["ny"], arr["nz"]], axis=1).astype(np.float64)
            semantic = arr["semantic"].copy()
            instance = arr["instance"].copy()
            if semantic.size and (semantic.max() >= 5 or instance.max() >= sample.n_leaves):
                raise LengthMismatch(f"object {index} has out-of-range labels")
            norm = meta.get("normalization", {"centroid": [0, 0, 0], "scale": 1.0})
            cloud = LabeledPointCloud(pts, semantic, instance, nrm, tuple(sample.provenance),
                                      np.asarray(norm["centroid"], dtype=float), float(norm["scale"]))
            if raw:
                yield index, sample, cloud, rec_head + blob + body
            else:
                yield index, sample, cloud
        if fh.read(1):
            raise LengthMismatch("trailing bytes after the last record")


def read_dataset(path):
    with open(path, "rb") as fh:
        head = read_header(fh)
    return head, list(iter_records(path))


def hash_dataset(path):
    h = FNV_OFFSET
    for *_, rec in iter_records(path, raw=True):
        h = fnv1a64(rec, h)
    return f"{h:016x}"


# ----------------------------------------------------------------- features


def write_feature_file(matrix, path, descriptor=None):
    data = np.ascontiguousarray(matrix.data, dtype="<f4")
    m, d = data.shape
    if m < 1:
        raise LengthMismatch("feature files need at least one row")
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, m, d))
        fh.write(np.ascontiguousarray(matrix.row_ids, dtype="<u8").tobytes())
        fh.write(data.tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump({"m": m, "d": d, "descriptor": descriptor}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_feature_file(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _FEATURE_HEADER.size:
        raise LengthMismatch("feature file shorter than its header")
    magic, m, d = _FEATURE_HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise BadMagic(f"not a feature file (magic {magic!r})")
    if m < 1 or d < 1:
        raise LengthMismatch(f"feature file declares an empty matrix ({m} x {d})")
    expected = _FEATURE_HEADER.size + 8 * m + 4 * m * d
    if len(buf) != expected:
        raise LengthMismatch(f"feature file has {len(buf)} bytes, header implies {expected}")
    off = _FEATURE_HEADER.size
    ids = np.frombuffer(buf, dtype="<u8", count=m, offset=off).astype(np.uint64)
    data = np.frombuffer(buf, dtype="<f4", count=m * d, offset=off + 8 * m).reshape(m, d)
    return FeatureMatrix(data.astype(np.float64), ids)


# --------------------------------------------------------------------- PLY


def export_ply(cloud, path, binary=True):
    """Write a point cloud with labels (and normals when present) as PLY."""
    with_normals = cloud.normals is not None
    n = len(cloud.points)
    props = ["float x", "float y", "float z"]
    if with_normals:
        props += ["float nx", "float ny", "float nz"]
    props += ["uchar semantic", "uchar instance"]
    fmt = "binary_little_endian" if binary else "ascii"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {n}"]
    header += [f"property {p}" for p in props]
    header.append("end_header")
    arr = np.empty(n, dtype=point_dtype(with_normals))
    arr["x"], arr["y"], arr["z"] = np.asarray(cloud.points).T
    if with_normals:
        arr["nx"], arr["ny"], arr["nz"] = np.asarray(cloud.normals).T
    arr["semantic"] = cloud.semantic
    arr["instance"] = cloud.instance
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(arr.tobytes())
        else:
            for row in arr:
                vals = [repr(float(v)) for v in list(row)[:-2]] + [str(int(row[-2])), str(int(row[-1]))]
                fh.write((" ".join(vals) + "\n").encode("ascii"))
