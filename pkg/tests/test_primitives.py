import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import inside_margin, mc_patch_areas, to_canonical, torus_minor_cdf
from rctgen.errors import InvalidParams
from rctgen.primitives import (
    Membership,
    Pose,
    PrimitiveInstance,
    PrimitiveKind,
    apply_pose,
    bounding_sphere,
    classify_point,
    classify_points,
    patch_areas,
    sample_canonical_surface,
    sample_params,
    sample_surface_batch,
    surface_area,
)
from rctgen.rct import sample_rotation_uniform

K = PrimitiveKind

EXAMPLE_PARAMS = {
    K.SPHERE: (0.8,),
    K.BOX: (0.5, 0.25, 0.25),
    K.CYLINDER: (0.4, 0.6),
    K.CONE: (0.5, 0.5),
    K.TORUS: (0.6, 0.2),
}


def random_pose(rng):
    return Pose(sample_rotation_uniform(rng), rng.uniform(-2, 2, 3), rng.uniform(0.25, 1.0))


class TestSurfaceArea:
    def test_unit_sphere(self):
        assert surface_area(K.SPHERE, (1.0,)) == pytest.approx(4 * math.pi, abs=1e-12)

    def test_unit_cube(self):
        assert surface_area(K.BOX, (0.5, 0.5, 0.5)) == pytest.approx(6.0, abs=1e-12)

    def test_torus_closed_form_matches_monte_carlo(self):
        big, small = 0.6, 0.2
        rng = np.random.default_rng(0)
        # the area element r (R + r cos v) does not depend on the major angle
        v = rng.uniform(0, 2 * math.pi, 400_000)
        mc = (2 * math.pi) ** 2 * np.mean(small * (big + small * np.cos(v)))
        assert surface_area(K.TORUS, (big, small)) == pytest.approx(4.737410, abs=1e-6)
        assert surface_area(K.TORUS, (big, small)) == pytest.approx(mc, rel=0.01)

    @pytest.mark.parametrize("kind", list(K))
    def test_patch_areas_match_monte_carlo(self, kind):
        params = EXAMPLE_PARAMS[kind]
        est = mc_patch_areas(int(kind), params, 1_000_000, np.random.default_rng(int(kind)))
        np.testing.assert_allclose(patch_areas(kind, params), est, rtol=0.01)
        inst = PrimitiveInstance(kind, params)
        assert inst.world_area == pytest.approx(est.sum(), rel=0.01)

    @pytest.mark.parametrize("params", [(0.0,), (-1.0,), (1.2,)])
    def test_invalid_sphere(self, params):
        with pytest.raises(InvalidParams):
            surface_area(K.SPHERE, params)

    def test_invalid_torus_and_box(self):
        with pytest.raises(InvalidParams):
            surface_area(K.TORUS, (0.3, 0.4))
        with pytest.raises(InvalidParams):
            surface_area(K.BOX, (0.6, 0.6, 0.6))
        with pytest.raises(InvalidParams):
            surface_area(K.CYLINDER, (0.8, 0.8))


class TestSurfaceSampling:
    def test_sphere_radius(self, rng):
        for _ in range(200):
            s = sample_canonical_surface(K.SPHERE, (0.8,), rng)
            assert np.linalg.norm(s.point) == pytest.approx(0.8, abs=1e-9)
            assert np.linalg.norm(s.normal) == pytest.approx(1.0, abs=1e-9)

    def test_box_face_frequencies(self):
        rng = np.random.default_rng(1)
        params = (0.5, 0.25, 0.25)
        _, _, patches = sample_surface_batch(K.BOX, params, rng, 100_000)
        counts = np.bincount(patches, minlength=6)
        expected = np.array([0.25, 0.25, 0.5, 0.5, 0.5, 0.5])
        expected = expected / expected.sum() * counts.sum()
        assert stats.chisquare(counts, expected).pvalue > 0.001

    def test_torus_minor_angle_density(self):
        big, small = 0.6, 0.2
        rng = np.random.default_rng(2)
        pts, _, _ = sample_surface_batch(K.TORUS, (big, small), rng, 100_000)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        v = np.mod(np.arctan2(pts[:, 2], rho - big), 2 * np.pi)
        res = stats.kstest(v, lambda t: torus_minor_cdf(t, big, small))
        assert res.pvalue > 0.001

    @pytest.mark.parametrize("kind", list(K))
    def test_samples_on_boundary_with_unit_normals(self, kind):
        rng = np.random.default_rng(3)
        params = EXAMPLE_PARAMS[kind]
        pts, nrm, _ = sample_surface_batch(kind, params, rng, 10_000)
        np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-9)
        inst = PrimitiveInstance(kind, params)
        assert np.all(classify_points(inst, pts, 1e-9) == Membership.ON)
        # outward: stepping along the normal leaves the solid
        assert np.all(classify_points(inst, pts + 1e-4 * nrm, 1e-9) == Membership.OUT)
        if kind != K.CONE:  # inward steps near the apex can cross the opposite side
            assert np.all(classify_points(inst, pts - 1e-4 * nrm, 1e-9) == Membership.IN)

    @pytest.mark.parametrize("kind", list(K))
    def test_posed_samples_classify_on(self, kind):
        rng = np.random.default_rng(4)
        for _ in range(5):
            params = sample_params(kind, rng)
            pose = random_pose(rng)
            inst = PrimitiveInstance(kind, params, pose)
            pts, _, _ = sample_surface_batch(kind, params, rng, 2000)
            world = apply_pose(pose, pts)
            assert np.all(classify_points(inst, world, 1e-7) == Membership.ON)
            center, radius = bounding_sphere(inst)
            assert np.all(np.linalg.norm(world - center, axis=1) <= radius + 1e-9)


class TestClassify:
    def test_unit_sphere_examples(self):
        s = PrimitiveInstance(K.SPHERE, (1.0,))
        assert classify_point(s, (0, 0, 0), 1e-9) == Membership.IN
        assert classify_point(s, (0, 0, 1), 1e-9) == Membership.ON
        assert classify_point(s, (0, 0, 1.1), 1e-9) == Membership.OUT

    def test_scaled_translated_sphere(self):
        s = PrimitiveInstance(K.SPHERE, (1.0,), Pose(np.eye(3), (3, 0, 0), 2.0))
        assert classify_point(s, (3, 0, 0)) == Membership.IN
        assert classify_point(s, (5, 0, 0)) == Membership.ON

    def test_negative_tolerance_rejected(self):
        s = PrimitiveInstance(K.SPHERE, (1.0,))
        with pytest.raises(InvalidParams):
            classify_point(s, (0, 0, 0), -1.0)

    @pytest.mark.parametrize("kind", [K.BOX, K.CYLINDER, K.CONE, K.TORUS, K.SPHERE])
    def test_grid_sign_oracle(self, kind):
        params = EXAMPLE_PARAMS[kind]
        inst = PrimitiveInstance(kind, params)
        g = np.linspace(-1.05, 1.05, 50)
        grid = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        tol = 1e-7
        margin = inside_margin(int(kind), params, grid)
        far = np.abs(margin) > 2 * tol
        codes = classify_points(inst, grid, tol)
        expected = np.where(margin > 0, Membership.IN, Membership.OUT)
        assert np.array_equal(codes[far], expected[far])

    @pytest.mark.parametrize("kind", list(K))
    def test_pose_round_trip(self, kind):
        rng = np.random.default_rng(5)
        params = EXAMPLE_PARAMS[kind]
        pose = random_pose(rng)
        canon = PrimitiveInstance(kind, params)
        posed = PrimitiveInstance(kind, params, pose)
        q = rng.uniform(-1.2, 1.2, (10_000, 3))
        # tol scales with pose so both sides use the same canonical band
        a = classify_points(posed, apply_pose(pose, q), 1e-7 * pose.scale)
        b = classify_points(canon, q, 1e-7)
        assert np.array_equal(a, b)


class TestPose:
    def test_identity(self):
        p = np.array([0.3, -2.0, 5.0])
        np.testing.assert_array_equal(apply_pose(Pose(), p), p)

    def test_quarter_turn(self):
        rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(apply_pose(Pose(rot), (1, 0, 0)), (0, 1, 0), atol=1e-12)

    def test_scale_then_translate(self):
        np.testing.assert_allclose(apply_pose(Pose(np.eye(3), (1, 1, 1), 2.0), (0.5, 0, 0)), (2, 1, 1))

    def test_invalid_pose(self):
        with pytest.raises(InvalidParams):
            Pose(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(InvalidParams):
            Pose(scale=0.0)

    def test_bounding_sphere_examples(self):
        c, r = bounding_sphere(PrimitiveInstance(K.SPHERE, (1.0,)))
        np.testing.assert_array_equal(c, 0.0)
        assert r == 1.0
        c, r = bounding_sphere(PrimitiveInstance(K.SPHERE, (1.0,), Pose(np.eye(3), (2, 0, 0), 0.5)))
        np.testing.assert_array_equal(c, (2, 0, 0))
        assert r == 0.5


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(list(K)), seed=st.integers(0, 2**32 - 1))
def test_domain_draws_are_valid_and_contained(kind, seed):
    rng = np.random.default_rng(seed)
    params = sample_params(kind, rng)
    inst = PrimitiveInstance(kind, params, random_pose(rng))
    pts, _, _ = sample_surface_batch(kind, params, rng, 200)
    world = apply_pose(inst.pose, pts)
    center, radius = bounding_sphere(inst)
    assert np.all(np.linalg.norm(world - center, axis=1) <= radius + 1e-9)
    assert np.all(classify_points(inst, world, 1e-7) == Membership.ON)
    q = to_canonical(inst.pose.rotation, inst.pose.translation, inst.pose.scale, world)
    np.testing.assert_allclose(q, pts, atol=1e-12)


def test_patch_areas_sum():
    for kind, params in EXAMPLE_PARAMS.items():
        assert patch_areas(kind, params).sum() == pytest.approx(surface_area(kind, params))
