# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 1D convolution kernels (hot path for training and batched attribution)."""

import numpy as np

BACKEND = "cython"


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b, int stride):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Cout = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Lout = (L - K) // stride + 1
    out_arr = np.empty((B, Cout, Lout))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t bi, o, c, j, t
    cdef double acc
    with nogil:
        for bi in range(B):
            for o in range(Cout):
                for j in range(Lout):
                    acc = b[o]
                    for c in range(Cin):
                        for t in range(K):
                            acc += x[bi, c, j * stride + t] * w[o, c, t]
                    out[bi, o, j] = acc
    return out_arr


def conv1d_input_grad(double[:, :, ::1] g, double[:, :, ::1] w, int stride, int input_len):
    cdef Py_ssize_t B = g.shape[0], Cout = g.shape[1], Lout = g.shape[2]
    cdef Py_ssize_t Cin = w.shape[1], K = w.shape[2]
    gx_arr = np.zeros((B, Cin, input_len))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t bi, o, c, j, t
    with nogil:
        for bi in range(B):
            for o in range(Cout):
                for j in range(Lout):
                    for c in range(Cin):
                        for t in range(K):
                            gx[bi, c, j * stride + t] += g[bi, o, j] * w[o, c, t]
    return gx_arr


def conv1d_param_grad(double[:, :, ::1] x, double[:, :, ::1] g, int kernel, int stride):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t Cout = g.shape[1], Lout = g.shape[2]
    gw_arr = np.zeros((Cout, Cin, kernel))
    gb_arr = np.zeros(Cout)
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t bi, o, c, j, t
    with nogil:
        for bi in range(B):
            for o in range(Cout):
                for j in range(Lout):
                    gb[o] += g[bi, o, j]
                    for c in range(Cin):
                        for t in range(kernel):
                            gw[o, c, t] += g[bi, o, j] * x[bi, c, j * stride + t]
    return gw_arr, gb_arr
