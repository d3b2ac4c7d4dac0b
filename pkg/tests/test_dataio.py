import json
import os

import numpy as np
import pytest
from plyfile import PlyData

from rctgen.dataio import (
    DatasetWriter,
    Manifest,
    export_ply,
    fnv1a64,
    hash_dataset,
    read_dataset,
    read_feature_file,
    write_dataset,
    write_feature_file,
)
from rctgen.errors import BadMagic, HeterogeneousRecords, LengthMismatch
from rctgen.metrics import FeatureMatrix
from rctgen.pipeline import generate_dataset, generate_object
from rctgen.rct import RctSpec
from rctgen.sampler import SamplerConfig

SPEC = RctSpec((1, 6), master_seed=11)


def objects(count, cfg=SamplerConfig(256)):
    return [(i, *generate_object(SPEC, cfg, i)) for i in range(count)]


class TestFnv:
    def test_reference_vectors(self):
        # published FNV-1a 64-bit test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_chaining(self):
        assert fnv1a64(b"bar", fnv1a64(b"foo")) == fnv1a64(b"foobar")


class TestDataset:
    def test_roundtrip(self, tmp_path):
        objs = objects(10)
        path = tmp_path / "d.p3ds"
        manifest = write_dataset(reversed(objs), path, spec=SPEC.to_dict())
        head, records = read_dataset(path)
        assert head.object_count == 10 and head.n_points == 256 and head.with_normals
        assert manifest.object_count == 10
        for (i, sample, cloud), (j, s2, c2) in zip(objs, records):
            assert i == j
            assert s2.to_dict() == sample.to_dict()
            assert c2.points.astype(np.float32).tobytes() == cloud.points.astype(np.float32).tobytes()
            assert c2.normals.astype(np.float32).tobytes() == cloud.normals.astype(np.float32).tobytes()
            assert np.array_equal(c2.semantic, cloud.semantic)
            assert np.array_equal(c2.instance, cloud.instance)
            np.testing.assert_array_equal(c2.centroid, cloud.centroid)
            assert c2.scale == cloud.scale
            assert c2.source == cloud.source
        assert hash_dataset(path) == manifest.content_hash
        assert Manifest.read(str(path) + ".manifest.json").to_dict() == manifest.to_dict()

    def test_empty_stream(self, tmp_path):
        path = tmp_path / "e.p3ds"
        manifest = write_dataset([], path, n_points=1024, with_normals=True)
        head, records = read_dataset(path)
        assert head.object_count == 0 and records == []
        assert manifest.object_count == 0
        assert hash_dataset(path) == manifest.content_hash

    def test_hash_changes_with_any_byte(self, tmp_path):
        path = tmp_path / "d.p3ds"
        manifest = write_dataset(objects(3), path)
        raw = bytearray(path.read_bytes())
        raw[-5] ^= 0x01  # a coordinate byte of the last record
        path.write_bytes(bytes(raw))
        assert hash_dataset(path) != manifest.content_hash

    def test_heterogeneous(self, tmp_path):
        a = objects(1)[0]
        b = (1, *generate_object(SPEC, SamplerConfig(128), 1))
        with pytest.raises(HeterogeneousRecords):
            write_dataset([a, b], tmp_path / "h.p3ds")
        assert not os.path.exists(tmp_path / "h.p3ds")

    def test_non_ascending_rejected(self, tmp_path):
        objs = objects(2)
        with pytest.raises(HeterogeneousRecords):
            with DatasetWriter(tmp_path / "x.p3ds", 256, True) as w:
                w.add(*objs[1])
                w.add(*objs[0])
        assert not os.path.exists(tmp_path / "x.p3ds")

    def test_truncated_and_bad_magic(self, tmp_path):
        path = tmp_path / "d.p3ds"
        write_dataset(objects(2), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-10])
        with pytest.raises(LengthMismatch):
            read_dataset(path)
        path.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(BadMagic):
            read_dataset(path)

    def test_threads_do_not_change_bytes(self, tmp_path):
        cfg = SamplerConfig(128)
        m1, _ = generate_dataset(SPEC, cfg, 40, tmp_path / "a.p3ds", threads=1)
        m8, _ = generate_dataset(SPEC, cfg, 40, tmp_path / "b.p3ds", threads=8)
        assert m1.content_hash == m8.content_hash
        assert (tmp_path / "a.p3ds").read_bytes() == (tmp_path / "b.p3ds").read_bytes()


class TestPly:
    def test_binary_header_and_roundtrip(self, tmp_path):
        _, _, cloud = objects(1, SamplerConfig(1024))[0]
        path = tmp_path / "c.ply"
        export_ply(cloud, path)
        header = path.read_bytes().split(b"end_header")[0].decode()
        assert "element vertex 1024\n" in header
        ply = PlyData.read(str(path))
        v = ply["vertex"]
        np.testing.assert_array_equal(v["x"], cloud.points[:, 0].astype(np.float32))
        np.testing.assert_array_equal(v["nz"], cloud.normals[:, 2].astype(np.float32))
        np.testing.assert_array_equal(v["instance"], cloud.instance)

    def test_ascii_without_normals(self, tmp_path):
        _, _, cloud = objects(1, SamplerConfig(64, with_normals=False))[0]
        path = tmp_path / "c.ply"
        export_ply(cloud, path, binary=False)
        ply = PlyData.read(str(path))
        names = [p.name for p in ply["vertex"].properties]
        assert names == ["x", "y", "z", "semantic", "instance"]
        np.testing.assert_allclose(ply["vertex"]["y"], cloud.points[:, 1], rtol=1e-6, atol=1e-7)
        np.testing.assert_array_equal(ply["vertex"]["semantic"], cloud.semantic)


class TestFeatureFile:
    def test_roundtrip(self, tmp_path, rng):
        data = rng.normal(size=(100, 64)).astype(np.float32).astype(np.float64)
        fm = FeatureMatrix(data, np.arange(100, 200, dtype=np.uint64))
        path = tmp_path / "f.p3df"
        write_feature_file(fm, path, {"d2_bins": 64})
        assert os.path.getsize(path) == 16 + 8 * 100 + 4 * 100 * 64
        back = read_feature_file(path)
        assert back.data.tobytes() == fm.data.tobytes()
        assert back.row_ids.tolist() == list(range(100, 200))
        assert json.loads((tmp_path / "f.p3df.json").read_text())["descriptor"] == {"d2_bins": 64}

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "f.p3df"
        write_feature_file(FeatureMatrix(rng.normal(size=(5, 3))), path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(LengthMismatch):
            read_feature_file(path)

    def test_zero_rows(self, tmp_path):
        import struct
        path = tmp_path / "z.p3df"
        path.write_bytes(struct.pack("<4sQI", b"P3DF", 0, 8))
        with pytest.raises(LengthMismatch):
            read_feature_file(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.p3df"
        path.write_bytes(b"NOPE" + bytes(12))
        with pytest.raises(BadMagic):
            read_feature_file(path)
