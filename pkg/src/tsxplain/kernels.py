"""Backend selection for the convolution kernels.

The compiled extension is preferred when it built; the numpy fallback is
always available. Set TSXPLAIN_PURE_PYTHON=1 to force the fallback (used
by the benchmark and for debugging).
"""

import os

import numpy as np

from tsxplain import _conv_numpy

if os.environ.get("TSXPLAIN_PURE_PYTHON"):
    _impl = _conv_numpy
else:
    try:
        from tsxplain import _convkernels as _impl
    except ImportError:
        _impl = _conv_numpy

BACKEND = _impl.BACKEND


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x, w, b, stride=1):
    return _impl.conv1d_forward(_c(x), _c(w), _c(b), stride)


def conv1d_input_grad(g, w, stride, input_len):
    return _impl.conv1d_input_grad(_c(g), _c(w), stride, input_len)


def conv1d_param_grad(x, g, kernel, stride):
    return _impl.conv1d_param_grad(_c(x), _c(g), kernel, stride)
