"""The compiled kernels against the numpy fallback."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from htl import _pykernels as py

ck = pytest.importorskip("htl._ckernels")

MASK = (1 << 64) - 1


def _splitmix_ref(state):
    """Reference splitmix64 on python ints: returns (next state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def test_splitmix_states_match_reference():  # [DERIVED] python-int reimplementation
    base = 12345
    s = base
    want = []
    for _ in range(5):
        s, out = _splitmix_ref(s)
        want.append(out)
    got = py.splitmix_states(base, 5)
    assert [int(v) for v in got] == want


def test_splitmix_uniforms_match_reference():  # [DERIVED]
    states = np.array([7, 2 ** 63 + 5], dtype=np.uint64)
    u = py.splitmix_uniforms(states, 3)
    for i, st0 in enumerate(states.tolist()):
        s = st0
        for j in range(3):
            s, out = _splitmix_ref(s)
            assert u[i, j] == (out >> 11) * 2.0 ** -53


arrays = hnp.arrays(np.float64, st.integers(1, 300), elements=st.floats(0.0, 1.0))


@given(a=arrays, b=arrays)
def test_direct_convolve(a, b):
    np.testing.assert_allclose(ck.direct_convolve(a, b), py.direct_convolve(a, b), rtol=1e-13, atol=1e-300)


@settings(max_examples=20)
@given(z=hnp.arrays(np.float64, st.integers(1, 400), elements=st.floats(0.0, 1.0)),
       g=hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(0.0, 0.02)))
def test_renewal_forward(z, g):
    np.testing.assert_allclose(ck.renewal_forward(z, g), py.renewal_forward(z, g), rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("kind,a,shift", [(1, 0.0, 3.0), (2, -1 / 2.5, 2.0), (0, 1.0, 1.5)])
def test_supremum_stream_bit_identical(kind, a, shift):
    n = 2000
    states = py.splitmix_states(99, n)
    out = []
    for mod in (ck, py):
        M, Mh, rng = np.zeros(n), np.zeros(n), states.copy()
        mod.walk_supremum_stream(M, Mh, rng, kind, a, shift, 200.0)
        out.append((M, Mh, rng))
    for x, y in zip(*out):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("kind,a,shift", [(1, 0.0, 3.0), (2, -1 / 2.5, 2.0)])
def test_ladder_stream_bit_identical(kind, a, shift):
    n = 2000
    states = py.splitmix_states(5, n)
    out = []
    for mod in (ck, py):
        state = np.zeros(n, dtype=np.int8)
        height = np.full(n, np.nan)
        occ = np.zeros(400)
        rng = states.copy()
        mod.walk_ladder_stream(state, height, rng, kind, a, shift, 100.0, 200.0, occ, 0.5)
        out.append((state, height, rng, occ))
    (s1, h1, r1, o1), (s2, h2, r2, o2) = out
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(h1, h2)
    np.testing.assert_array_equal(r1, r2)
    # histogram summation order differs between the backends
    np.testing.assert_allclose(o1, o2, rtol=1e-12)


def test_supremum_block_identical():
    rng = np.random.default_rng(3)
    n, L = 500, 64
    incs = (1.0 / np.sqrt(rng.random((n, L))) - 3.0)
    res = []
    for mod in (ck, py):
        S, M, Mh = np.zeros(n), np.zeros(n), np.zeros(n)
        done = np.zeros(n, dtype=np.uint8)
        left = mod.walk_supremum_block(S, M, Mh, done, incs, 30.0)
        res.append((left, S, M, Mh, done))
    assert res[0][0] == res[1][0]
    for x, y in zip(res[0][1:], res[1][1:]):
        np.testing.assert_array_equal(x, y)


def test_ladder_block_identical():
    rng = np.random.default_rng(4)
    n, L = 500, 64
    incs = (1.0 / np.sqrt(rng.random((n, L))) - 3.0)
    res = []
    for mod in (ck, py):
        S = np.zeros(n)
        state = np.zeros(n, dtype=np.int8)
        height = np.full(n, np.nan)
        occ = np.zeros(300)
        left = mod.walk_ladder_block(S, state, height, incs, 40.0, 80.0, occ, 0.5)
        res.append((left, S, state, height, occ))
    assert res[0][0] == res[1][0]
    for x, y in zip(res[0][1:4], res[1][1:4]):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_allclose(res[0][4], res[1][4], rtol=1e-12)


def test_pure_python_switch():
    env = dict(os.environ, HTL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import htl.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_default_backend_is_compiled():
    from htl import kernels

    if os.environ.get("HTL_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "cython"
