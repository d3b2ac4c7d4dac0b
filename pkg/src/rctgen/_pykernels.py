"""Numpy implementations of the compiled kernels in ``_ckernels``.

Signatures and results match the compiled module; these run whenever the
extension is unavailable or ``RCTGEN_PURE_PYTHON=1`` is set.
"""

import numpy as np

SPHERE, BOX, CYLINDER, CONE, TORUS = range(5)
OUT, ON, IN = 0, 1, 2
UNION, INTERSECTION, DIFFERENCE = range(3)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def _seg_dist(px, pz, ax, az, bx, bz):
    ex, ez = bx - ax, bz - az
    t = ((px - ax) * ex + (pz - az) * ez) / (ex * ex + ez * ez)
    t = np.clip(t, 0.0, 1.0)
    dx = px - ax - t * ex
    dz = pz - az - t * ez
    return np.sqrt(dx * dx + dz * dz)


def canonical_sdf(kind, params, pts):
    pts = np.asarray(pts, dtype=np.float64)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    if kind == SPHERE:
        return np.sqrt(x * x + y * y + z * z) - params[0]
    if kind == BOX:
        d = np.abs(pts) - np.asarray(params[:3])
        outside = np.sqrt((np.maximum(d, 0.0) ** 2).sum(axis=1))
        return np.minimum(d.max(axis=1), 0.0) + outside
    if kind == CYLINDER:
        rho = np.sqrt(x * x + y * y)
        dx = rho - params[0]
        dz = np.abs(z) - params[1]
        ox = np.maximum(dx, 0.0)
        oz = np.maximum(dz, 0.0)
        return np.minimum(np.maximum(dx, dz), 0.0) + np.sqrt(ox * ox + oz * oz)
    if kind == CONE:
        r, h = params[0], params[1]
        rho = np.sqrt(x * x + y * y)
        d = np.minimum(_seg_dist(rho, z, 0.0, h, r, -h),
                       _seg_dist(rho, z, 0.0, -h, r, -h))
        inside = (z > -h) & (2.0 * h * rho + r * (z - h) < 0.0)
        return np.where(inside, -d, d)
    rho = np.sqrt(x * x + y * y) - params[0]
    return np.sqrt(rho * rho + z * z) - params[1]


def _leaf_codes(points, kind, params, rot, trans, scale, tol):
    q = ((points - trans) @ rot) / scale
    s = canonical_sdf(kind, params, q)
    t = tol / scale
    codes = np.full(len(points), ON, dtype=np.int8)
    codes[s < -t] = IN
    codes[s > t] = OUT
    return codes


def classify_tree(points, leaf_kind, leaf_params, leaf_rot, leaf_trans,
                  leaf_scale, node_leaf, post_nodes, post_ops, post_left,
                  post_right, root, forced, tol):
    points = np.asarray(points, dtype=np.float64)
    forced = np.asarray(forced)
    vals = {}
    for node, leaf in enumerate(node_leaf):
        if leaf < 0:
            continue
        codes = _leaf_codes(points, leaf_kind[leaf], leaf_params[leaf],
                            leaf_rot[leaf], leaf_trans[leaf], leaf_scale[leaf],
                            tol)
        codes[forced == leaf] = ON
        vals[node] = codes
    for node, op, left, right in zip(post_nodes, post_ops, post_left, post_right):
        a, b = vals[right], vals[left]
        if op == UNION:
            vals[node] = np.maximum(a, b)
        elif op == INTERSECTION:
            vals[node] = np.minimum(a, b)
        else:
            vals[node] = np.minimum(a, 2 - b).astype(np.int8)
    return np.ascontiguousarray(vals[root], dtype=np.int8)


def directed_nn_sum(X, Y, block=1024):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    total = 0.0
    for start in range(0, len(X), block):
        chunk = X[start:start + block]
        diff = chunk[:, None, :] - Y[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        total += float(np.sqrt(sq.min(axis=1)).sum())
    return total


def fnv1a64(data, h=FNV_OFFSET):
    for byte in bytes(data):
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h
