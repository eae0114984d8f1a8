import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hirise import _pykernels, kernels

compiled = pytest.importorskip("hirise._ckernels", reason="compiled kernels not built")

BACKENDS = [_pykernels, compiled]


@st.composite
def frames(draw):
    k = draw(st.integers(1, 5))
    bw, bh = draw(st.integers(1, 6)), draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    data = rng.uniform(0, 1, size=(bh * k, bw * k, 3))
    weights = rng.lognormal(0, 0.3, size=data.shape) if draw(st.booleans()) else None
    return data, weights, k


@settings(max_examples=150, deadline=None)
@given(frames(), st.booleans())
def test_pool_backends_agree(frame, gray):
    data, weights, k = frame
    ref = _pykernels.pool_blocks(data, weights, k, gray)
    got = compiled.pool_blocks(data, weights, k, gray)
    assert got.shape == ref.shape
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("bits", range(1, 17))
def test_quantize_backends_agree(bits):
    rng = np.random.default_rng(bits)
    full = (1 << bits) - 1
    # exact half-steps and their neighbours stress the rounding rule
    halves = (np.arange(full) + 0.5) / full
    values = np.concatenate([rng.uniform(-0.1, 1.1, 5000), halves,
                             np.nextafter(halves, 0), np.nextafter(halves, 1), [0.0, 1.0]])
    for vdd in (1.0, 2.5):
        v = np.ascontiguousarray(values * vdd)
        np.testing.assert_array_equal(compiled.quantize(v, vdd, bits),
                                      _pykernels.quantize(v, vdd, bits))


@pytest.mark.parametrize("impl", BACKENDS, ids=["python", "cython"])
def test_half_rounds_away_from_zero(impl):
    assert impl.quantize(np.array([0.5]), 1.0, 8)[0] == 128
    assert impl.quantize(np.array([1.5 / 255]), 1.0, 8)[0] == 2


@pytest.mark.parametrize("impl", BACKENDS, ids=["python", "cython"])
def test_unweighted_gray_block_mean(impl):
    data = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3) / 11
    out = impl.pool_blocks(data, None, 2, True)
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == pytest.approx(data.mean(), abs=1e-15)


def test_default_backend():
    assert kernels.compiled_available()
    forced = os.environ.get("HIRISE_PURE_PYTHON", "") in ("1", "true", "yes")
    assert kernels.BACKEND == ("python" if forced else "cython")


def test_env_forces_fallback():
    env = {**os.environ, "HIRISE_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import hirise.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
