# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: primitive signed distances, CSG tree classification,
brute-force nearest-neighbour sums and FNV-1a hashing.

Every function here has a numpy twin in ``_pykernels`` with the same
signature; ``_backend`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax, fmin, INFINITY
from libc.stdint cimport uint64_t, int8_t, int32_t

cnp.import_array()

cdef enum:
    SPHERE = 0
    BOX = 1
    CYLINDER = 2
    CONE = 3
    TORUS = 4

cdef enum:
    OUT = 0
    ON = 1
    IN = 2

cdef enum:
    UNION = 0
    INTERSECTION = 1
    DIFFERENCE = 2


cdef inline double _seg_dist(double px, double pz, double ax, double az,
                             double bx, double bz) noexcept nogil:
    cdef double ex = bx - ax, ez = bz - az
    cdef double t = ((px - ax) * ex + (pz - az) * ez) / (ex * ex + ez * ez)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cdef double dx = px - ax - t * ex, dz = pz - az - t * ez
    return sqrt(dx * dx + dz * dz)


cdef inline double _sdf(int kind, const double* prm, double x, double y,
                        double z) noexcept nogil:
    cdef double rho, dx, dy, dz, ox, oy, oz, inside, d, h, r
    if kind == SPHERE:
        return sqrt(x * x + y * y + z * z) - prm[0]
    elif kind == BOX:
        dx = fabs(x) - prm[0]
        dy = fabs(y) - prm[1]
        dz = fabs(z) - prm[2]
        ox = fmax(dx, 0.0)
        oy = fmax(dy, 0.0)
        oz = fmax(dz, 0.0)
        inside = fmin(fmax(dx, fmax(dy, dz)), 0.0)
        return inside + sqrt(ox * ox + oy * oy + oz * oz)
    elif kind == CYLINDER:
        rho = sqrt(x * x + y * y)
        dx = rho - prm[0]
        dz = fabs(z) - prm[1]
        ox = fmax(dx, 0.0)
        oz = fmax(dz, 0.0)
        return fmin(fmax(dx, dz), 0.0) + sqrt(ox * ox + oz * oz)
    elif kind == CONE:
        r = prm[0]
        h = prm[1]
        rho = sqrt(x * x + y * y)
        d = fmin(_seg_dist(rho, z, 0.0, h, r, -h),
                 _seg_dist(rho, z, 0.0, -h, r, -h))
        if z > -h and 2.0 * h * rho + r * (z - h) < 0.0:
            return -d
        return d
    else:
        rho = sqrt(x * x + y * y) - prm[0]
        return sqrt(rho * rho + z * z) - prm[1]


def canonical_sdf(int kind, const double[::1] params, const double[:, :] pts):
    """Signed distance of each canonical-frame point to a canonical primitive."""
    cdef Py_ssize_t n = pts.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            o[i] = _sdf(kind, &params[0], pts[i, 0], pts[i, 1], pts[i, 2])
    return out


cdef inline int8_t _leaf_code(int kind, const double* prm,
                              const double* rot, const double* trans,
                              double scale, double x, double y, double z,
                              double tol) noexcept nogil:
    # canonical q = R^T (p - t) / scale
    cdef double px = x - trans[0], py = y - trans[1], pz = z - trans[2]
    cdef double qx = (rot[0] * px + rot[3] * py + rot[6] * pz) / scale
    cdef double qy = (rot[1] * px + rot[4] * py + rot[7] * pz) / scale
    cdef double qz = (rot[2] * px + rot[5] * py + rot[8] * pz) / scale
    cdef double s = _sdf(kind, prm, qx, qy, qz)
    cdef double t = tol / scale
    if s < -t:
        return IN
    if s > t:
        return OUT
    return ON


def classify_tree(const double[:, :] points,
                  const int32_t[:] leaf_kind,
                  const double[:, ::1] leaf_params,
                  const double[:, :, ::1] leaf_rot,
                  const double[:, ::1] leaf_trans,
                  const double[:] leaf_scale,
                  const int32_t[:] node_leaf,
                  const int32_t[:] post_nodes,
                  const int32_t[:] post_ops,
                  const int32_t[:] post_left,
                  const int32_t[:] post_right,
                  int root,
                  const int32_t[:] forced,
                  double tol):
    """Three-valued membership of every point against a CSG tree.

    ``forced[i] >= 0`` pins that leaf's classification to On for point i.
    Internal nodes are given in post-order; each evaluates
    ``right <op> left`` (the left child is the translated operand).
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t n_nodes = node_leaf.shape[0]
    cdef Py_ssize_t n_int = post_nodes.shape[0]
    cdef Py_ssize_t i, j, leaf
    cdef int8_t a, b, c
    out = np.empty(n, dtype=np.int8)
    vals_arr = np.empty(n_nodes, dtype=np.int8)
    cdef int8_t[:] o = out
    cdef int8_t[:] vals = vals_arr
    with nogil:
        for i in range(n):
            for j in range(n_nodes):
                leaf = node_leaf[j]
                if leaf < 0:
                    continue
                if forced[i] == leaf:
                    vals[j] = ON
                else:
                    vals[j] = _leaf_code(leaf_kind[leaf], &leaf_params[leaf, 0],
                                         &leaf_rot[leaf, 0, 0], &leaf_trans[leaf, 0],
                                         leaf_scale[leaf], points[i, 0],
                                         points[i, 1], points[i, 2], tol)
            for j in range(n_int):
                b = vals[post_left[j]]
                a = vals[post_right[j]]
                if post_ops[j] == UNION:
                    c = a if a > b else b
                elif post_ops[j] == INTERSECTION:
                    c = a if a < b else b
                else:
                    b = 2 - b
                    c = a if a < b else b
                vals[post_nodes[j]] = c
            o[i] = vals[root]
    return out


def directed_nn_sum(const double[:, :] X, const double[:, :] Y):
    """Sum over rows of X of the Euclidean distance to the nearest row of Y."""
    cdef Py_ssize_t nx = X.shape[0], ny = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best, acc, diff, total = 0.0
    with nogil:
        for i in range(nx):
            best = INFINITY
            for j in range(ny):
                acc = 0.0
                for k in range(d):
                    diff = X[i, k] - Y[j, k]
                    acc = acc + diff * diff
                    if acc >= best:
                        break
                if acc < best:
                    best = acc
            total = total + sqrt(best)
    return total


def fnv1a64(const unsigned char[:] data, uint64_t h=14695981039346656037ULL):
    """Continue a 64-bit FNV-1a hash over ``data`` starting from state ``h``."""
    cdef Py_ssize_t i, n = data.shape[0]
    with nogil:
        for i in range(n):
            h = h ^ data[i]
            h = h * 1099511628211ULL
    return h
