"""Pure-numpy 1D convolution kernels (fallback backend).

All three routines loop only over the kernel taps, so each iteration is a
vectorized slice operation. Arrays must be float64; contiguity does not
matter here (it does for the compiled backend).
"""

import numpy as np

BACKEND = "numpy"


def _out_len(length, kernel, stride):
    return (length - kernel) // stride + 1


def conv1d_forward(x, w, b, stride):
    """Valid cross-correlation. x: (B, Cin, L), w: (Cout, Cin, K), b: (Cout,)."""
    B, Cin, L = x.shape
    Cout, _, K = w.shape
    Lout = _out_len(L, K, stride)
    out = np.broadcast_to(b[None, :, None], (B, Cout, Lout)).copy()
    for t in range(K):
        xs = x[:, :, t : t + stride * (Lout - 1) + 1 : stride]
        out += np.einsum("bcl,oc->bol", xs, w[:, :, t])
    return out


def conv1d_input_grad(g, w, stride, input_len):
    """Gradient wrt the convolution input. g: (B, Cout, Lout)."""
    B, Cout, Lout = g.shape
    _, Cin, K = w.shape
    gx = np.zeros((B, Cin, input_len))
    for t in range(K):
        gx[:, :, t : t + stride * (Lout - 1) + 1 : stride] += np.einsum(
            "bol,oc->bcl", g, w[:, :, t]
        )
    return gx


def conv1d_param_grad(x, g, kernel, stride):
    """Gradients wrt weights and bias. Returns (gw, gb)."""
    B, Cin, L = x.shape
    _, Cout, Lout = g.shape[0], g.shape[1], g.shape[2]
    gw = np.empty((Cout, Cin, kernel))
    for t in range(kernel):
        xs = x[:, :, t : t + stride * (Lout - 1) + 1 : stride]
        gw[:, :, t] = np.einsum("bol,bcl->oc", g, xs)
    gb = g.sum(axis=(0, 2))
    return gw, gb
