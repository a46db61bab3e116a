import os
import subprocess
import sys

import numpy as np
import pytest

from soundexlm import kernels

NUMBA_LANE = kernels._build_numba_lane()

RNG = np.random.default_rng(42)

DTYPES = [np.float32, np.float64]


def tol(dtype):
    return dict(rtol=1e-4, atol=1e-6) if dtype == np.float32 else dict(rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("dtype", DTYPES)
def test_gelu_lanes_agree(dtype):
    x = RNG.normal(size=(7, 33)).astype(dtype)
    dy = RNG.normal(size=x.shape).astype(dtype)
    np.testing.assert_allclose(
        NUMBA_LANE["gelu"](x), kernels.gelu_numpy(x), **tol(dtype)
    )
    np.testing.assert_allclose(
        NUMBA_LANE["gelu_backward"](x, dy),
        kernels.gelu_backward_numpy(x, dy),
        **tol(dtype),
    )


@pytest.mark.parametrize("dtype", DTYPES)
def test_layernorm_lanes_agree(dtype):
    x = RNG.normal(size=(9, 16)).astype(dtype)
    g = RNG.normal(size=16).astype(dtype)
    b = RNG.normal(size=16).astype(dtype)
    dy = RNG.normal(size=x.shape).astype(dtype)
    y1, m1, r1 = NUMBA_LANE["layernorm_forward"](x, g, b, 1e-12)
    y2, m2, r2 = kernels.layernorm_forward_numpy(x, g, b, 1e-12)
    np.testing.assert_allclose(y1, y2, **tol(dtype))
    np.testing.assert_allclose(m1, m2, **tol(dtype))
    np.testing.assert_allclose(r1, r2, **tol(dtype))
    out1 = NUMBA_LANE["layernorm_backward"](x, g, m1, r1, dy)
    out2 = kernels.layernorm_backward_numpy(x, g, m2, r2, dy)
    for a, b_ in zip(out1, out2):
        np.testing.assert_allclose(a, b_, **tol(dtype))


@pytest.mark.parametrize("dtype", DTYPES)
def test_softmax_lanes_agree(dtype):
    x = RNG.normal(size=(11, 23)).astype(dtype) * 4
    dp = RNG.normal(size=x.shape).astype(dtype)
    p1 = NUMBA_LANE["softmax_rows"](x)
    p2 = kernels.softmax_rows_numpy(x)
    np.testing.assert_allclose(p1, p2, **tol(dtype))
    np.testing.assert_allclose(p1.sum(axis=1), np.ones(11), rtol=1e-6)
    np.testing.assert_allclose(
        NUMBA_LANE["softmax_backward_rows"](p1, dp),
        kernels.softmax_backward_rows_numpy(p2, dp),
        **tol(dtype),
    )


@pytest.mark.parametrize("dtype", DTYPES)
def test_cross_entropy_lanes_agree(dtype):
    logits = RNG.normal(size=(13, 29)).astype(dtype) * 3
    targets = RNG.integers(0, 29, size=13)
    n1, d1 = NUMBA_LANE["cross_entropy_rows"](logits, targets)
    n2, d2 = kernels.cross_entropy_rows_numpy(logits, targets)
    np.testing.assert_allclose(n1, n2, **tol(dtype))
    np.testing.assert_allclose(d1, d2, **tol(dtype))
    assert np.all(n1 >= 0)


@pytest.mark.parametrize("dtype", DTYPES)
def test_adam_lanes_agree(dtype):
    shape = (6, 10)

    def run(lane):
        p = np.linspace(-1, 1, 60).reshape(shape).astype(dtype)
        g = RNG.normal(size=shape).astype(dtype)
        m = np.zeros(shape, dtype=dtype)
        v = np.zeros(shape, dtype=dtype)
        for step in (1, 2, 3):
            lane(p, g, m, v, 0.01, 0.9, 0.999, 1e-8, step)
        return p

    g_state = RNG.bit_generator.state
    a = run(NUMBA_LANE["adam_update"])
    RNG.bit_generator.state = g_state
    b = run(kernels.adam_update_numpy)
    np.testing.assert_allclose(a, b, **tol(dtype))


def test_masked_softmax_underflows_to_exact_zero():
    x = np.array([[1.0, 2.0, -1e9]], dtype=np.float32)
    for fn in (NUMBA_LANE["softmax_rows"], kernels.softmax_rows_numpy):
        p = fn(x)
        assert p[0, 2] == 0.0


def test_env_flag_selects_numpy_lane():
    env = dict(os.environ, SOUNDEXLM_KERNELS="numpy")
    out = subprocess.run(
        [sys.executable, "-c", "from soundexlm import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_env_flag_rejects_garbage():
    env = dict(os.environ, SOUNDEXLM_KERNELS="cuda")
    out = subprocess.run(
        [sys.executable, "-c", "import soundexlm.kernels"],
        env=env,
        capture_output=True,
        text=True,
    )
    assert out.returncode != 0
    assert "SOUNDEXLM_KERNELS" in out.stderr


def test_default_backend_is_numba_here():
    assert kernels.BACKEND == "numba"
