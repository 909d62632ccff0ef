# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the training hot loop.

Same contracts as `numpy_backend`; plain C loops over float64 memoryviews.
The models here are small (tens of units), so the win over NumPy comes from
skipping per-call dispatch overhead rather than from blocking tricks.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

BACKEND = "cython"


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((m, n))
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out


def linear(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t m = x.shape[0], k = x.shape[1], n = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = b[j]
            for p in range(k):
                acc += x[i, p] * w[j, p]
            y[i, j] = acc
    return out


def linear_grads(double[:, ::1] gout, double[:, ::1] x, double[:, ::1] w):
    cdef Py_ssize_t m = x.shape[0], k = x.shape[1], n = w.shape[0]
    cdef cnp.ndarray[double, ndim=2] gx_arr = np.zeros((m, k))
    cdef cnp.ndarray[double, ndim=2] gw_arr = np.zeros((n, k))
    cdef cnp.ndarray[double, ndim=1] gb_arr = np.zeros(n)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j, p
    cdef double g
    for i in range(m):
        for j in range(n):
            g = gout[i, j]
            gb[j] += g
            for p in range(k):
                gx[i, p] += g * w[j, p]
                gw[j, p] += g * x[i, p]
    return gx_arr, gw_arr, gb_arr


def leaky_relu(double[:, ::1] x, double slope):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            y[i, j] = x[i, j] if x[i, j] > 0.0 else slope * x[i, j]
    return out


def leaky_relu_grad(double[:, ::1] x, double[:, ::1] gout, double slope):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] g = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            g[i, j] = gout[i, j] if x[i, j] > 0.0 else slope * gout[i, j]
    return out


def sigmoid(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double e
    for i in range(m):
        for j in range(n):
            if x[i, j] >= 0.0:
                y[i, j] = 1.0 / (1.0 + exp(-x[i, j]))
            else:
                e = exp(x[i, j])
                y[i, j] = e / (1.0 + e)
    return out


def sigmoid_grad(double[:, ::1] y, double[:, ::1] gout):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] g = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(n):
            g[i, j] = gout[i, j] * y[i, j] * (1.0 - y[i, j])
    return out


def softmax_rows(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(m):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            y[i, j] = exp(x[i, j] - mx)
            s += y[i, j]
        for j in range(n):
            y[i, j] /= s
    return out


def logsumexp_rows(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, 1))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(m):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            s += exp(x[i, j] - mx)
        y[i, 0] = mx + log(s)
    return out


def adam_update(
    cnp.ndarray param_arr,
    cnp.ndarray grad_arr,
    cnp.ndarray m_arr,
    cnp.ndarray v_arr,
    long t,
    double lr,
    double beta1,
    double beta2,
    double eps,
):
    cdef double[::1] p = param_arr.reshape(-1)
    cdef double[::1] g = grad_arr.reshape(-1)
    cdef double[::1] m = m_arr.reshape(-1)
    cdef double[::1] v = v_arr.reshape(-1)
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - beta1**t
    cdef double c2 = 1.0 - beta2**t
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
