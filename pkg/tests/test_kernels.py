import numpy as np
import pytest

from tsxplain import _conv_numpy, kernels

try:
    from tsxplain import _convkernels
except ImportError:
    _convkernels = None

needs_ext = pytest.mark.skipif(_convkernels is None, reason="extension not built")


def brute_forward(x, w, b, stride):
    B, Cin, L = x.shape
    Cout, _, K = w.shape
    Lout = (L - K) // stride + 1
    out = np.zeros((B, Cout, Lout))
    for bi in range(B):
        for o in range(Cout):
            for j in range(Lout):
                out[bi, o, j] = b[o] + sum(
                    x[bi, c, j * stride + t] * w[o, c, t]
                    for c in range(Cin)
                    for t in range(K)
                )
    return out


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_numpy_forward_matches_brute_force(rng, stride):
    x = rng.normal(size=(3, 2, 13))
    w = rng.normal(size=(4, 2, 3))
    b = rng.normal(size=4)
    np.testing.assert_allclose(
        _conv_numpy.conv1d_forward(x, w, b, stride), brute_forward(x, w, b, stride)
    )


@needs_ext
@pytest.mark.parametrize("stride", [1, 2, 3])
def test_backends_agree(rng, stride):
    x = np.ascontiguousarray(rng.normal(size=(4, 3, 17)))
    w = np.ascontiguousarray(rng.normal(size=(2, 3, 4)))
    b = rng.normal(size=2)
    fwd_np = _conv_numpy.conv1d_forward(x, w, b, stride)
    fwd_cy = _convkernels.conv1d_forward(x, w, b, stride)
    np.testing.assert_allclose(fwd_cy, fwd_np, atol=1e-12)

    g = np.ascontiguousarray(rng.normal(size=fwd_np.shape))
    np.testing.assert_allclose(
        _convkernels.conv1d_input_grad(g, w, stride, 17),
        _conv_numpy.conv1d_input_grad(g, w, stride, 17),
        atol=1e-12,
    )
    gw_cy, gb_cy = _convkernels.conv1d_param_grad(x, g, 4, stride)
    gw_np, gb_np = _conv_numpy.conv1d_param_grad(x, g, 4, stride)
    np.testing.assert_allclose(gw_cy, gw_np, atol=1e-12)
    np.testing.assert_allclose(gb_cy, gb_np, atol=1e-12)


def test_selected_backend_exposed():
    assert kernels.BACKEND in ("numpy", "cython")
