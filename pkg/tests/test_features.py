import numpy as np
import pytest

from rctgen.errors import InvalidParams, UnnormalizedInput
from rctgen.features import DescriptorConfig, batch_features, extract_descriptor
from rctgen.primitives import Pose, PrimitiveInstance, PrimitiveKind
from rctgen.rct import BooleanOp, compose, single
from rctgen.sampler import LabeledPointCloud, SamplerConfig, normalize_cloud, sample_labeled_cloud

K = PrimitiveKind


def unit_sphere_cloud(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def three_box_union():
    box = lambda c: PrimitiveInstance(K.BOX, (0.3, 0.3, 0.3), Pose(np.eye(3), c, 1.0))
    inner = compose(BooleanOp.UNION, box((0, 0, 0)), box((0.4, 0, 0)))
    # fold a third box in by hand: union is associative, so a chain works
    from rctgen.rct import RctSample, TreeShape
    shape = TreeShape((1, 2, -1, -1, -1), (4, 3, -1, -1, -1), 0)
    leaves = (box((0, 0.4, 0)), inner.leaves[0], inner.leaves[1])
    return RctSample(shape, leaves, (BooleanOp.UNION, BooleanOp.UNION), np.zeros((2, 3)))


class TestDescriptor:
    def test_dim_and_blocks(self, rng):
        cfg = DescriptorConfig()
        d = extract_descriptor(unit_sphere_cloud(2048, rng), cfg)
        assert d.shape == (cfg.dim,) == (67,)
        assert d[:64].sum() == pytest.approx(1.0, abs=1e-9)
        assert d[64:].sum() == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self, rng):
        pts = unit_sphere_cloud(1024, rng)
        assert extract_descriptor(pts).tobytes() == extract_descriptor(pts.copy()).tobytes()

    def test_sphere_isotropic_spectrum(self, rng):
        d = extract_descriptor(unit_sphere_cloud(8192, rng))
        np.testing.assert_allclose(d[64:], 1 / 3, atol=0.02)

    def test_permutation_invariant(self, rng):
        pts = unit_sphere_cloud(1024, rng)
        perm = rng.permutation(len(pts))
        assert np.array_equal(extract_descriptor(pts), extract_descriptor(pts[perm]))

    def test_translation_invariant(self, rng):
        raw = rng.uniform(-1, 1, (2048, 3)) * (1.0, 0.5, 0.2)
        a, _, _ = normalize_cloud(raw)
        b, _, _ = normalize_cloud(raw + (5.0, -3.0, 2.0))
        np.testing.assert_allclose(extract_descriptor(a), extract_descriptor(b), atol=1e-6)

    def test_unnormalized(self):
        with pytest.raises(UnnormalizedInput):
            extract_descriptor(np.array([[2.0, 0, 0], [0, 0, 0]]))

    def test_label_hist(self, rng):
        cloud = LabeledPointCloud(unit_sphere_cloud(100, rng), np.array([0] * 60 + [4] * 40, dtype=np.uint8),
                                  np.zeros(100, dtype=np.uint8))
        cfg = DescriptorConfig(include_label_hist=True)
        d = extract_descriptor(cloud, cfg)
        assert len(d) == cfg.dim == 72
        np.testing.assert_allclose(d[-5:], (0.6, 0, 0, 0, 0.4))
        with pytest.raises(InvalidParams):
            extract_descriptor(cloud.points, cfg)

    def test_bad_config(self):
        with pytest.raises(InvalidParams):
            DescriptorConfig(d2_bins=1)
        cfg = DescriptorConfig(d2_bins=32, pair_seed=5)
        assert DescriptorConfig.from_dict(cfg.to_dict()) == cfg


class TestBatch:
    def test_single_row(self, rng):
        pts = unit_sphere_cloud(512, rng)
        fm = batch_features([(7, pts)])
        assert fm.m == 1 and list(fm.row_ids) == [7]
        np.testing.assert_array_equal(fm.data[0], extract_descriptor(pts))

    def test_permuted_order(self, rng):
        items = [(i, unit_sphere_cloud(256, rng) * rng.uniform(0.5, 1.0)) for i in range(6)]
        a = batch_features(items)
        b = batch_features(items[::-1], threads=3)
        assert list(b.row_ids) == list(a.row_ids)[::-1]
        np.testing.assert_array_equal(b.data, a.data[::-1])

    def test_error_names_row(self):
        with pytest.raises(UnnormalizedInput, match="object 3"):
            batch_features([(3, np.array([[3.0, 0, 0], [0, 0, 0]]))])

    def test_sphere_vs_box_union(self):
        cfg = SamplerConfig(2048)
        s = sample_labeled_cloud(single(PrimitiveInstance(K.SPHERE, (1.0,))), cfg, np.random.default_rng(0))
        b = sample_labeled_cloud(three_box_union(), cfg, np.random.default_rng(0))
        fm = batch_features([(0, s), (1, b)])
        assert np.linalg.norm(fm.data[0] - fm.data[1]) > 0.01
