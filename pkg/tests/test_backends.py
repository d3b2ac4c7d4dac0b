import os
import subprocess
import sys

import numpy as np
import pytest

from rctgen._backend import BACKEND, ckernels, pykernels
from rctgen.primitives import PrimitiveKind, sample_params
from rctgen.rct import BooleanOp, RctSpec, sample_rct

needs_ext = pytest.mark.skipif(ckernels is None, reason="compiled extension not built")


def run_program(mod, program, pts, tol, forced):
    return np.asarray(mod.classify_tree(
        pts, program.leaf_kind, program.leaf_params, program.leaf_rot, program.leaf_trans,
        program.leaf_scale, program.node_leaf, program.post_nodes, program.post_ops,
        program.post_left, program.post_right, program.root, forced, tol))


@pytest.mark.parametrize("kind", list(PrimitiveKind))
def test_sdf_matches_closed_form_and_backends(backend, kind, rng):
    params = np.zeros(3)
    p = sample_params(kind, rng)
    params[:len(p)] = p
    pts = rng.uniform(-1.2, 1.2, (2000, 3))
    got = np.asarray(backend.canonical_sdf(int(kind), params, pts))
    ref = np.asarray(pykernels.canonical_sdf(int(kind), params, pts))
    np.testing.assert_allclose(got, ref, atol=1e-12)
    if kind == PrimitiveKind.SPHERE:
        np.testing.assert_allclose(got, np.linalg.norm(pts, axis=1) - params[0], atol=1e-12)


def test_classify_tree(backend):
    spec = RctSpec((1, 6), ops=tuple(BooleanOp), master_seed=5)
    rng = np.random.default_rng(0)
    for i in range(30):
        try:
            s = sample_rct(spec, i)
        except Exception:
            continue
        prog = s.program()
        pts = rng.uniform(prog.lo - 0.1, prog.hi + 0.1, (3000, 3))
        forced = rng.integers(-1, s.n_leaves, len(pts)).astype(np.int32)
        a = run_program(backend, prog, pts, 1e-7, forced)
        b = run_program(pykernels, prog, pts, 1e-7, forced)
        assert np.array_equal(a, b)


def test_directed_nn_sum(backend, rng):
    X, Y = rng.normal(size=(300, 3)), rng.normal(size=(200, 3))
    ref = sum(np.min(np.linalg.norm(x - Y, axis=1)) for x in X)
    assert backend.directed_nn_sum(X, Y) == pytest.approx(ref, rel=1e-12)


def test_fnv(backend):
    data = np.frombuffer(b"foobar", dtype=np.uint8)
    assert int(backend.fnv1a64(data)) == 0x85944171F73967E8
    blob = np.random.default_rng(1).integers(0, 256, 5000).astype(np.uint8)
    assert int(backend.fnv1a64(blob, 12345)) == int(pykernels.fnv1a64(blob, 12345))


@needs_ext
@pytest.mark.skipif(os.environ.get("RCTGEN_PURE_PYTHON", "") not in ("", "0"), reason="fallback forced")
def test_extension_is_default():
    assert BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, RCTGEN_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "import rctgen; print(rctgen.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert res.stdout.strip() == "python"


def test_fallback_output_identical(tmp_path):
    # the same dataset generated under both backends hashes identically
    code = ("import sys; from rctgen.cli import main; "
            "sys.exit(main(['generate', '--out', sys.argv[1], '--count', '20', '--points', '128']))")
    hashes = []
    for flag in ("0", "1"):
        out = tmp_path / f"d{flag}.p3ds"
        env = dict(os.environ, RCTGEN_PURE_PYTHON=flag)
        subprocess.run([sys.executable, "-c", code, str(out)], check=True, env=env, capture_output=True)
        hashes.append((tmp_path / f"d{flag}.p3ds.manifest.json").read_text())
    assert hashes[0] == hashes[1]
