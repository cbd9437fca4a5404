"""Pure-numpy versions of the kernels in ``_kernels.pyx``.

Same entry points: channel-last (B, H, W, C) images, (O, C, kh, kw) kernels.
"""
import numpy as np


def conv_forward(x, kernel, nthreads=1):
    O, C, kh, kw = kernel.shape
    B, H, W, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((B, H, W, O), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + H, j:j + W, :] @ kernel[:, :, i, j].T
    return out


def conv_grad_weights(x, g, kh, kw, nthreads=1):
    B, H, W, C = x.shape
    O = g.shape[-1]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    g2 = g.reshape(-1, O)
    dw = np.empty((O, C, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            dw[:, :, i, j] = g2.T @ xp[:, i:i + H, j:j + W, :].reshape(-1, C)
    return dw


def _sigmoid_parts(x, theta, gamma):
    a = np.abs(x)
    z = gamma * (a - theta)
    active = z >= -30.0
    sig = 1.0 / (1.0 + np.exp(-np.where(active, z, 0.0)))
    return a, sig, active


def threshold_forward(x, theta, alpha, gamma):
    a, sig, active = _sigmoid_parts(x, theta, gamma)
    return np.where(active, np.sign(x) * (a - alpha * theta) * sig, 0.0).astype(x.dtype, copy=False)


def threshold_backward(x, g, theta, alpha, gamma):
    a, sig, active = _sigmoid_parts(x, theta, gamma)
    dsig = sig * (1.0 - sig)
    shifted = a - alpha * theta
    gx = np.where(active, g * (sig + shifted * gamma * dsig), 0.0).astype(x.dtype, copy=False)
    dtheta = np.where(active, g * np.sign(x) * (-alpha * sig - shifted * gamma * dsig), 0.0)
    return gx, float(np.sum(dtheta))
