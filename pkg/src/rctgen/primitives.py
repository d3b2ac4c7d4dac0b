"""Analytic primitives: parameters, areas, surface sampling, membership and pose.

Every canonical primitive is centred at the origin and fits in the closed
unit ball. A world instance is ``scale * (R @ p) + translation``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import InternalSamplingFailure, InvalidParams

MAX_REJECTION_ROUNDS = 10_000
DEFAULT_TOL = 1e-7


class PrimitiveKind(enum.IntEnum):
    SPHERE = 0
    BOX = 1
    CYLINDER = 2
    CONE = 3
    TORUS = 4

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        return cls[str(name).strip().upper()]


class Membership(enum.IntEnum):
    OUT = 0
    ON = 1
    IN = 2


# parameter names per kind, in storage order
PARAM_NAMES = {
    PrimitiveKind.SPHERE: ("radius",),
    PrimitiveKind.BOX: ("hx", "hy", "hz"),
    PrimitiveKind.CYLINDER: ("radius", "half_height"),
    PrimitiveKind.CONE: ("radius", "half_height"),
    PrimitiveKind.TORUS: ("major", "minor"),
}

# number of boundary patches per kind
N_PATCHES = {
    PrimitiveKind.SPHERE: 1,
    PrimitiveKind.BOX: 6,
    PrimitiveKind.CYLINDER: 3,
    PrimitiveKind.CONE: 2,
    PrimitiveKind.TORUS: 1,
}

_UNIT_BALL_SLACK = 1e-12


def validate_params(kind, params):
    """Return params as a float tuple, raising InvalidParams if out of domain."""
    kind = PrimitiveKind.parse(kind)
    try:
        values = tuple(float(v) for v in params)
    except TypeError as exc:
        raise InvalidParams(f"params for {kind.name} must be a sequence") from exc
    expected = len(PARAM_NAMES[kind])
    if len(values) != expected:
        raise InvalidParams(f"{kind.name} takes {expected} parameters, got {len(values)}")
    if not all(math.isfinite(v) and v > 0 for v in values):
        raise InvalidParams(f"{kind.name} parameters must be finite and positive: {values}")
    if kind == PrimitiveKind.TORUS:
        big, small = values
        if small >= big:
            raise InvalidParams("torus minor radius must be below the major radius")
        extent = big + small
    else:
        extent = math.sqrt(sum(v * v for v in values))
    if extent > 1.0 + _UNIT_BALL_SLACK:
        raise InvalidParams(f"{kind.name} {values} does not fit in the unit ball")
    return values


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not self.scale > 0:
            raise InvalidParams(f"pose scale must be positive, got {self.scale}")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0):
            raise InvalidParams("pose rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise InvalidParams("pose rotation must have determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "scale", float(self.scale))

    def translated(self, offset):
        return Pose(self.rotation, self.translation + np.asarray(offset, dtype=np.float64), self.scale)


@dataclass(frozen=True)
class PrimitiveInstance:
    kind: PrimitiveKind
    params: tuple
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        kind = PrimitiveKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", validate_params(kind, self.params))

    @property
    def world_area(self):
        return surface_area(self.kind, self.params) * self.pose.scale ** 2

    def padded_params(self):
        out = np.zeros(4)
        out[: len(self.params)] = self.params
        return out


@dataclass(frozen=True)
class SurfaceSample:
    point: np.ndarray
    normal: np.ndarray
    patch: int


def patch_areas(kind, params):
    kind = PrimitiveKind.parse(kind)
    p = validate_params(kind, params)
    if kind == PrimitiveKind.SPHERE:
        return np.array([4.0 * math.pi * p[0] ** 2])
    if kind == PrimitiveKind.BOX:
        hx, hy, hz = p
        yz, xz, xy = 4 * hy * hz, 4 * hx * hz, 4 * hx * hy
        return np.array([yz, yz, xz, xz, xy, xy])
    if kind == PrimitiveKind.CYLINDER:
        r, h = p
        cap = math.pi * r * r
        return np.array([2.0 * math.pi * r * 2.0 * h, cap, cap])
    if kind == PrimitiveKind.CONE:
        r, h = p
        slant = math.hypot(r, 2.0 * h)
        return np.array([math.pi * r * slant, math.pi * r * r])
    big, small = p
    return np.array([4.0 * math.pi ** 2 * big * small])


def surface_area(kind, params):
    """Closed-form boundary area of the canonical solid, all patches included."""
    return float(patch_areas(kind, params).sum())


def _unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    bad = norms < 1e-12
    while bad.any():
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
        bad = norms < 1e-12
    return v / norms[:, None]


def _disk(rng, n, radius):
    rho = radius * np.sqrt(rng.random(n))
    phi = rng.random(n) * 2.0 * math.pi
    return rho * np.cos(phi), rho * np.sin(phi)


def _torus_minor_angles(rng, n, big, small):
    out = np.empty(n)
    filled = 0
    for _ in range(MAX_REJECTION_ROUNDS):
        need = n - filled
        if need == 0:
            return out
        v = rng.random(2 * need + 8) * 2.0 * math.pi
        keep = v[rng.random(v.size) * (big + small) <= big + small * np.cos(v)][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    if filled < n:
        raise InternalSamplingFailure("torus minor-angle rejection did not converge")
    return out


def sample_surface_batch(kind, params, rng, n):
    """Draw ``n`` area-uniform boundary samples of a canonical primitive.

    Returns ``(points, normals, patches)`` with shapes (n, 3), (n, 3), (n,).
    """
    kind = PrimitiveKind.parse(kind)
    p = validate_params(kind, params)
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    if kind == PrimitiveKind.SPHERE:
        u = _unit_vectors(rng, n)
        return p[0] * u, u, np.zeros(n, dtype=np.int64)
    if kind == PrimitiveKind.TORUS:
        big, small = p
        u = rng.random(n) * 2.0 * math.pi
        v = _torus_minor_angles(rng, n, big, small)
        ring = big + small * np.cos(v)
        pts[:, 0] = ring * np.cos(u)
        pts[:, 1] = ring * np.sin(u)
        pts[:, 2] = small * np.sin(v)
        nrm[:, 0] = np.cos(v) * np.cos(u)
        nrm[:, 1] = np.cos(v) * np.sin(u)
        nrm[:, 2] = np.sin(v)
        return pts, nrm, np.zeros(n, dtype=np.int64)

    areas = patch_areas(kind, p)
    patches = rng.choice(len(areas), size=n, p=areas / areas.sum())
    if kind == PrimitiveKind.BOX:
        half = np.asarray(p)
        axis = patches // 2
        sign = np.where(patches % 2 == 0, 1.0, -1.0)
        pts[:] = (rng.random((n, 3)) * 2.0 - 1.0) * half
        rows = np.arange(n)
        pts[rows, axis] = sign * half[axis]
        nrm[:] = 0.0
        nrm[rows, axis] = sign
        return pts, nrm, patches
    r, h = p
    phi = rng.random(n) * 2.0 * math.pi
    cx, cy = _disk(rng, n, r)
    if kind == PrimitiveKind.CYLINDER:
        lateral = patches == 0
        pts[:, 0] = np.where(lateral, r * np.cos(phi), cx)
        pts[:, 1] = np.where(lateral, r * np.sin(phi), cy)
        z_side = (rng.random(n) * 2.0 - 1.0) * h
        cap_z = np.where(patches == 1, h, -h)
        pts[:, 2] = np.where(lateral, z_side, cap_z)
        nrm[:, 0] = np.where(lateral, np.cos(phi), 0.0)
        nrm[:, 1] = np.where(lateral, np.sin(phi), 0.0)
        nrm[:, 2] = np.where(lateral, 0.0, np.where(patches == 1, 1.0, -1.0))
        return pts, nrm, patches
    # cone: apex at +h, base disk at -h
    lateral = patches == 0
    s = np.sqrt(rng.random(n))
    slant = math.hypot(r, 2.0 * h)
    pts[:, 0] = np.where(lateral, s * r * np.cos(phi), cx)
    pts[:, 1] = np.where(lateral, s * r * np.sin(phi), cy)
    pts[:, 2] = np.where(lateral, h - 2.0 * h * s, -h)
    nrm[:, 0] = np.where(lateral, 2.0 * h * np.cos(phi) / slant, 0.0)
    nrm[:, 1] = np.where(lateral, 2.0 * h * np.sin(phi) / slant, 0.0)
    nrm[:, 2] = np.where(lateral, r / slant, -1.0)
    return pts, nrm, patches


def sample_canonical_surface(kind, params, rng):
    """One area-uniform boundary sample with its outward normal and patch id."""
    pts, nrm, patches = sample_surface_batch(kind, params, rng, 1)
    return SurfaceSample(pts[0], nrm[0], int(patches[0]))


def apply_pose(pose, p):
    """Rotate, scale, then translate: ``scale * (R @ p) + translation``."""
    p = np.asarray(p, dtype=np.float64)
    return pose.scale * (p @ pose.rotation.T) + pose.translation


def invert_pose(pose, p):
    p = np.asarray(p, dtype=np.float64)
    return ((p - pose.translation) @ pose.rotation) / pose.scale


def _codes(sdf, tol):
    codes = np.full(sdf.shape, Membership.ON, dtype=np.int8)
    codes[sdf < -tol] = Membership.IN
    codes[sdf > tol] = Membership.OUT
    return codes


def canonical_signed_distance(kind, params, pts):
    kind = PrimitiveKind.parse(kind)
    prm = np.zeros(4)
    prm[: len(params)] = params
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=np.float64)
    return kernels.canonical_sdf(int(kind), prm, pts)


def classify_points(instance, pts, tol=DEFAULT_TOL):
    """Vectorised membership codes (see Membership) for an (n, 3) array."""
    if tol < 0:
        raise InvalidParams("tolerance must be non-negative")
    q = invert_pose(instance.pose, np.atleast_2d(pts))
    sdf = canonical_signed_distance(instance.kind, instance.params, q)
    return _codes(sdf, tol / instance.pose.scale)


def classify_point(instance, p, tol=DEFAULT_TOL):
    return Membership(int(classify_points(instance, np.reshape(p, (1, 3)), tol)[0]))


def bounding_sphere(instance):
    return instance.pose.translation.copy(), instance.pose.scale


# Canonical parameter domains used by the random generator.
SPHERE_RADIUS = (0.5, 1.0)
BOX_HALF = (0.2, 0.577)
ROUND_RADIUS = (0.2, 0.7)
ROUND_HALF_HEIGHT = (0.2, 0.7)
TORUS_MAJOR = (0.4, 0.8)
TORUS_MINOR_LOW = 0.1


def torus_minor_high(major):
    return min(0.3, major - 0.05, 1.0 - major)


def sample_params(kind, rng):
    """Uniform draw from the generator's parameter domain for ``kind``."""
    kind = PrimitiveKind.parse(kind)
    if kind == PrimitiveKind.SPHERE:
        return (float(rng.uniform(*SPHERE_RADIUS)),)
    if kind == PrimitiveKind.BOX:
        return tuple(float(v) for v in rng.uniform(*BOX_HALF, size=3))
    if kind == PrimitiveKind.TORUS:
        big = float(rng.uniform(*TORUS_MAJOR))
        return big, float(rng.uniform(TORUS_MINOR_LOW, torus_minor_high(big)))
    for _ in range(MAX_REJECTION_ROUNDS):
        r = float(rng.uniform(*ROUND_RADIUS))
        h = float(rng.uniform(*ROUND_HALF_HEIGHT))
        if r * r + h * h <= 1.0:
            return r, h
    raise InternalSamplingFailure("parameter rejection did not converge")


def params_in_domain(kind, params):
    kind = PrimitiveKind.parse(kind)
    p = params
    if kind == PrimitiveKind.SPHERE:
        return SPHERE_RADIUS[0] <= p[0] <= SPHERE_RADIUS[1]
    if kind == PrimitiveKind.BOX:
        return all(BOX_HALF[0] <= v <= BOX_HALF[1] for v in p)
    if kind == PrimitiveKind.TORUS:
        return (TORUS_MAJOR[0] <= p[0] <= TORUS_MAJOR[1]
                and TORUS_MINOR_LOW <= p[1] <= torus_minor_high(p[0]))
    return (ROUND_RADIUS[0] <= p[0] <= ROUND_RADIUS[1]
            and ROUND_HALF_HEIGHT[0] <= p[1] <= ROUND_HALF_HEIGHT[1]
            and p[0] ** 2 + p[1] ** 2 <= 1.0)
