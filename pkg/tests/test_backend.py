"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from lzsc import _backend, _kernels_py

compiled = pytest.importorskip("lzsc._kernels")

DTYPES = [(np.float64, 1e-12), (np.float32, 2e-4)]


@pytest.mark.parametrize("dtype,tol", DTYPES)
@pytest.mark.parametrize("shape", [(1, 5, 5, 1, 3, 3), (2, 9, 7, 3, 4, 5), (1, 16, 16, 8, 8, 9), (3, 4, 6, 2, 1, 1)])
def test_conv_forward_parity(dtype, tol, shape):
    B, H, W, C, O, k = shape
    r = np.random.default_rng(0)
    x = r.standard_normal((B, H, W, C)).astype(dtype)
    w = r.standard_normal((O, C, k, k)).astype(dtype)
    a = _kernels_py.conv_forward(x, w)
    b = compiled.conv_forward(x, w, 2)
    assert b.dtype == dtype
    assert np.max(np.abs(a - b)) < tol * max(1.0, np.max(np.abs(a)))


@pytest.mark.parametrize("dtype,tol", DTYPES)
@pytest.mark.parametrize("shape", [(1, 5, 5, 1, 3, 3), (2, 9, 7, 3, 4, 5), (2, 16, 12, 8, 1, 9)])
def test_grad_weights_parity(dtype, tol, shape):
    B, H, W, C, O, k = shape
    r = np.random.default_rng(1)
    x = r.standard_normal((B, H, W, C)).astype(dtype)
    g = r.standard_normal((B, H, W, O)).astype(dtype)
    a = _kernels_py.conv_grad_weights(x, g, k, k)
    b = compiled.conv_grad_weights(x, g, k, k, 2)
    assert np.max(np.abs(a - b)) < tol * max(1.0, np.max(np.abs(a)))


@pytest.mark.parametrize("dtype,tol", DTYPES)
def test_threshold_parity(dtype, tol):
    r = np.random.default_rng(2)
    x = (r.standard_normal((2, 8, 8, 4)) * 0.5).astype(dtype)
    x[0, 0, 0, 0] = 0.0
    g = r.standard_normal(x.shape).astype(dtype)
    for theta in (0.05, 0.3, 1.0):
        fa = _kernels_py.threshold_forward(x, theta, 0.1, 100.0)
        fb = compiled.threshold_forward(x, theta, 0.1, 100.0)
        assert np.max(np.abs(fa - fb)) < tol
        ga, ta = _kernels_py.threshold_backward(x, g, theta, 0.1, 100.0)
        gb, tb = compiled.threshold_backward(x, g, theta, 0.1, 100.0)
        assert np.max(np.abs(ga - gb)) < tol * 100
        assert abs(ta - tb) < tol * 100 * max(1.0, abs(ta))


def test_results_independent_of_thread_count():
    r = np.random.default_rng(3)
    x = r.standard_normal((2, 12, 12, 4))
    w = r.standard_normal((3, 4, 5, 5))
    g = r.standard_normal((2, 12, 12, 3))
    assert np.array_equal(compiled.conv_forward(x, w, 1), compiled.conv_forward(x, w, 4))
    assert np.array_equal(compiled.conv_grad_weights(x, g, 5, 5, 1), compiled.conv_grad_weights(x, g, 5, 5, 4))


def test_backend_switch_roundtrip():
    from lzsc.tensor import conv2d_same

    r = np.random.default_rng(4)
    x = r.standard_normal((6, 6, 2))
    w = r.standard_normal((2, 2, 3, 3))
    original = _backend.NAME
    try:
        _backend.use("python")
        a = conv2d_same(x, w)
        _backend.use("compiled")
        b = conv2d_same(x, w)
    finally:
        _backend.use(original)
    assert np.allclose(a, b, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.use("gpu")


def test_env_forces_fallback():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "import lzsc; print(lzsc.BACKEND)"],
                         env={"LZSC_BACKEND": "python", "PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
