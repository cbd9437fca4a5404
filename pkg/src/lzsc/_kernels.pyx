# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled same-size 2D correlation kernels.

Public entry points take channel-last (B, H, W, C) images and
(O, C, kh, kw) kernels like the numpy fallback; internally the work is done
channel-first so the innermost loop runs along a contiguous image row.
"""
import numpy as np
from cython.parallel cimport prange
from libc.stdlib cimport free, malloc
from libc.math cimport exp, fabs
from libc.string cimport memset

ctypedef fused real:
    float
    double


cdef inline void _axpy(real *y, const real *x, real a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        y[k] += a * x[k]


cdef inline void _fma_row(real *acc, const real *a, const real *b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        acc[k] += a[k] * b[k]


cdef void _forward(const real[:, :, :, ::1] x, const real[:, :, :, ::1] w,
                   real[:, :, :, ::1] out, int nthreads) noexcept nogil:
    # x (B, C, H, W), w (O, C, kh, kw), out (B, O, H, W)
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t bo, b, o, c, h, i, j, hi, lo, hi_col, col
    cdef real wv
    for bo in prange(B * O, num_threads=nthreads, schedule="static"):
        b = bo // O
        o = bo % O
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    wv = w[o, c, i, j]
                    if wv == 0:
                        continue
                    lo = pw - j if j < pw else 0
                    hi_col = W + pw - j if j > pw else W
                    for h in range(H):
                        hi = h + i - ph
                        if hi < 0 or hi >= H:
                            continue
                        _axpy(&out[b, o, h, lo], &x[b, c, hi, lo + j - pw], wv, hi_col - lo)


cdef void _grad_weights(const real[:, :, :, ::1] x, const real[:, :, :, ::1] g,
                        real[:, :, :, ::1] dw, int nthreads) noexcept nogil:
    # x (B, C, H, W), g (B, O, H, W), dw (O, C, kh, kw)
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = dw.shape[0], kh = dw.shape[2], kw = dw.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t oc, o, c, i, j, b, h, hi, lo, hi_col, col
    cdef real gv
    cdef real *acc
    cdef real *tap
    # One thread owns each (o, c) slice. Every output-gradient row is read once
    # and multiplied against the kh*kw shifted input rows, accumulating into a
    # per-tap row buffer; the buffers are summed in a fixed order at the end so
    # results do not depend on the thread count.
    for oc in prange(O * C, num_threads=nthreads, schedule="static"):
        o = oc // C
        c = oc % C
        acc = <real *> malloc(kh * kw * W * sizeof(real))
        memset(acc, 0, kh * kw * W * sizeof(real))
        for b in range(B):
            for h in range(H):
                for i in range(kh):
                    hi = h + i - ph
                    if hi < 0 or hi >= H:
                        continue
                    for j in range(kw):
                        lo = pw - j if j < pw else 0
                        hi_col = W + pw - j if j > pw else W
                        tap = acc + (i * kw + j) * W
                        _fma_row(&tap[lo], &g[b, o, h, lo], &x[b, c, hi, lo + j - pw], hi_col - lo)
        for i in range(kh):
            for j in range(kw):
                tap = acc + (i * kw + j) * W
                gv = 0
                for col in range(W):
                    gv = gv + tap[col]
                dw[o, c, i, j] = gv
        free(acc)


def conv_forward(x, kernel, int nthreads=1):
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    w = np.ascontiguousarray(kernel, dtype=xc.dtype)
    out = np.zeros((xc.shape[0], w.shape[0], xc.shape[2], xc.shape[3]), dtype=xc.dtype)
    if xc.dtype == np.float32:
        _forward[float](xc, w, out, nthreads)
    else:
        _forward[double](xc, w, out, nthreads)
    return out.transpose(0, 2, 3, 1)


def conv_grad_weights(x, g, Py_ssize_t kh, Py_ssize_t kw, int nthreads=1):
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    gc = np.ascontiguousarray(g.transpose(0, 3, 1, 2), dtype=xc.dtype)
    dw = np.zeros((gc.shape[1], xc.shape[1], kh, kw), dtype=xc.dtype)
    if xc.dtype == np.float32:
        _grad_weights[float](xc, gc, dw, nthreads)
    else:
        _grad_weights[double](xc, gc, dw, nthreads)
    return dw


def threshold_forward(x, double theta, double alpha, double gamma):
    """Sigmoidal threshold with the exact-zero clamp below gamma*(|x|-theta) = -30."""
    xa = np.ascontiguousarray(x)
    out = np.empty_like(xa)
    if xa.dtype == np.float32:
        _thr_fwd[float](xa.reshape(-1), out.reshape(-1), theta, alpha, gamma)
    else:
        _thr_fwd[double](xa.reshape(-1), out.reshape(-1), theta, alpha, gamma)
    return out


def threshold_backward(x, g, double theta, double alpha, double gamma):
    """Return (g * dT/dx, sum(g * dT/dtheta))."""
    xa = np.ascontiguousarray(x)
    ga = np.ascontiguousarray(g, dtype=xa.dtype)
    gx = np.empty_like(xa)
    if xa.dtype == np.float32:
        dtheta = _thr_bwd[float](xa.reshape(-1), ga.reshape(-1), gx.reshape(-1), theta, alpha, gamma)
    else:
        dtheta = _thr_bwd[double](xa.reshape(-1), ga.reshape(-1), gx.reshape(-1), theta, alpha, gamma)
    return gx, dtheta


cdef void _thr_fwd(const real[::1] x, real[::1] out, double theta, double alpha,
                   double gamma) noexcept nogil:
    cdef Py_ssize_t k
    cdef double a, z, s
    for k in range(x.shape[0]):
        a = fabs(x[k])
        z = gamma * (a - theta)
        if z < -30.0 or x[k] == 0:
            out[k] = 0
            continue
        s = 1.0 if x[k] > 0 else -1.0
        out[k] = <real> (s * (a - alpha * theta) / (1.0 + exp(-z)))


cdef double _thr_bwd(const real[::1] x, const real[::1] g, real[::1] gx, double theta,
                     double alpha, double gamma) noexcept nogil:
    cdef Py_ssize_t k
    cdef double a, z, s, sig, dsig, shifted, acc = 0
    for k in range(x.shape[0]):
        a = fabs(x[k])
        z = gamma * (a - theta)
        if z < -30.0:
            gx[k] = 0
            continue
        sig = 1.0 / (1.0 + exp(-z))
        dsig = sig * (1.0 - sig)
        shifted = a - alpha * theta
        gx[k] = <real> (g[k] * (sig + shifted * gamma * dsig))
        if x[k] != 0:
            s = 1.0 if x[k] > 0 else -1.0
            acc += g[k] * s * (-alpha * sig - shifted * gamma * dsig)
    return acc
