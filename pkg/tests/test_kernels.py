"""The numba kernels and the numpy fallback must agree.

The path is fixed at import time, so each one is exercised in a subprocess.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clifmorse import _kernels as K

SCRIPT = r"""
import json, sys
import numpy as np
from clifmorse import JIT_ENABLED, _kernels as K
from clifmorse.geodesic_index import spec_from_ks
from clifmorse.path_flow import PolygonPath, shorten_run

rng = np.random.default_rng(7)
xs = [(lambda a: a - a.T)(rng.standard_normal((6, 6))) for _ in range(20)]
rots = [K.exp_skew(0.4 * x) for x in xs]
verts = spec_from_ks([1, 1, 1, 1]).sample(12)
for i in range(1, 12):
    a = rng.standard_normal((8, 8))
    verts[i] = verts[i] @ K.exp_skew(1e-2 * (a - a.T))
res = shorten_run(PolygonPath(verts), max_iters=200)
phase = np.exp(1j * np.linspace(0, 5, 40))
out = {
    "jit": JIT_ENABLED,
    "log": [K.log_orthogonal(r).tolist() for r in rots],
    "exp": [K.exp_skew(x).tolist() for x in xs],
    "energy": float(K.polygon_energy(verts)),
    "flow": res.energies[-1],
    "iters": res.iterations,
    "unwrap": list(K.unwrap_det_phase(phase)),
}
json.dump(out, sys.stdout)
"""


def _run(flag: str) -> dict:
    env = dict(os.environ, CLIFMORSE_NO_JIT=flag)
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def both():
    return _run("0"), _run("1")


def test_flag_selects_path(both):
    jit, py = both
    assert py["jit"] is False
    if not jit["jit"]:
        pytest.skip("numba not importable")


def test_kernel_parity(both):
    jit, py = both
    assert np.allclose(jit["log"], py["log"], atol=1e-12)
    assert np.allclose(jit["exp"], py["exp"], atol=1e-12)
    assert np.isclose(jit["energy"], py["energy"], rtol=1e-12)
    assert np.isclose(jit["flow"], py["flow"], rtol=1e-10)
    assert jit["iters"] == py["iters"]
    assert np.allclose(jit["unwrap"], py["unwrap"], atol=1e-12)


@given(st.integers(2, 8), st.floats(0.01, 3.0), st.integers(0, 2**32 - 1))
def test_log_exp_round_trip(p, scale, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p))
    x = a - a.T
    x *= scale / max(np.max(np.abs(np.linalg.eigvals(x))), 1e-12)
    r = K.exp_skew(x)
    assert np.allclose(r.T @ r, np.eye(p), atol=1e-12)
    assert np.allclose(K.log_orthogonal(r), x, atol=1e-9)


def test_segment_dist_symmetry(rng):
    a = rng.standard_normal((5, 5))
    r = K.exp_skew(0.5 * (a - a.T))
    d_ab = K.dist2(np.eye(5), r)
    assert np.isclose(d_ab, K.dist2(r, np.eye(5)))
    assert np.isclose(d_ab, np.sum(K.log_orthogonal(r) ** 2) / 5)
