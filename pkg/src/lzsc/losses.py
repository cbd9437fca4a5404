"""Training losses and a differentiable SSIM.

L1 terms are means over pixels (and over the batch). SSIM uses an 11x11
Gaussian window (sigma 1.5), C1 = 0.01**2, C2 = 0.03**2 for unit dynamic
range, averaged over valid window positions.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tape
from .tensor import ContractError, sobel_gradient

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_1d(size=WINDOW, sigma=SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


_G = gaussian_1d()


def _filter_valid(x):
    """Separable Gaussian correlation over the last two axes, 'valid' region."""
    x = sliding_window_view(x, WINDOW, axis=-1) @ _G
    return np.moveaxis(sliding_window_view(np.moveaxis(x, -2, -1), WINDOW, axis=-1) @ _G, -1, -2)


def _filter_valid_adjoint(y):
    pad = WINDOW - 1
    g = _G[::-1]
    y = np.pad(y, [(0, 0)] * (y.ndim - 1) + [(pad, pad)])
    y = sliding_window_view(y, WINDOW, axis=-1) @ g
    y = np.moveaxis(y, -2, -1)
    y = np.pad(y, [(0, 0)] * (y.ndim - 1) + [(pad, pad)])
    return np.moveaxis(sliding_window_view(y, WINDOW, axis=-1) @ g, -1, -2)


def _squeeze(img):
    img = np.asarray(img, dtype=float)
    if img.ndim >= 3 and img.shape[-1] == 1:
        img = img[..., 0]
    if img.ndim < 2:
        raise ContractError(f"ssim expects 2-D images, got shape {img.shape}")
    if img.shape[-1] < WINDOW or img.shape[-2] < WINDOW:
        raise ContractError(f"image {img.shape[-2:]} is smaller than the {WINDOW}x{WINDOW} window")
    return img


def ssim_with_grad(x, y):
    """Per-image SSIM (mean over window positions) and a VJP for the second argument.

    Returns ``(values, vjp)`` where ``values`` has the batch shape of the
    inputs and ``vjp(g)`` maps an upstream gradient of that shape to
    d/dy with the shape of ``y``.
    """
    y_shape = np.shape(y)
    x = _squeeze(x)
    y = _squeeze(y)
    if x.shape != y.shape:
        raise ContractError(f"ssim inputs differ in shape: {x.shape} vs {y.shape}")
    mx, my = _filter_valid(x), _filter_valid(y)
    exx, eyy, exy = _filter_valid(x * x), _filter_valid(y * y), _filter_valid(x * y)
    sxx, syy, sxy = exx - mx * mx, eyy - my * my, exy - mx * my
    n1, n2 = 2 * mx * my + C1, 2 * sxy + C2
    d1, d2 = mx * mx + my * my + C1, sxx + syy + C2
    smap = (n1 * n2) / (d1 * d2)
    count = smap.shape[-1] * smap.shape[-2]
    values = smap.mean(axis=(-2, -1))

    def vjp(g):
        g = np.asarray(g, dtype=float)[..., None, None] / count
        d_my = g * smap * (2 * mx / n1 - 2 * mx / n2 - 2 * my / d1 + 2 * my / d2)
        d_eyy = -g * smap / d2
        d_exy = g * 2 * n1 / (d1 * d2)
        grad = (_filter_valid_adjoint(d_my) + 2 * y * _filter_valid_adjoint(d_eyy)
                + x * _filter_valid_adjoint(d_exy))
        return grad.reshape(y_shape)

    return values, vjp


def ssim(x, y):
    """Mean SSIM of two single-channel images (or batches of them)."""
    values, _ = ssim_with_grad(x, y)
    return float(np.mean(values))


def _check_same(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ContractError(f"loss inputs must share one shape, got {sorted(shapes)}")


def stage1_terms(tape, I1p, I1, I2p, I2):
    """sum_i mean|I_i' - I_i| + mean|grad I_i' - grad I_i| on tape nodes."""
    _check_same(I1p.value, I1.value, I2p.value, I2.value)
    total = None
    for pred, ref in ((I1p, I1), (I2p, I2)):
        term = tape.add(tape.mean_abs_diff(pred, ref),
                        tape.mean_abs_diff(tape.sobel(pred), tape.const(sobel_gradient(ref.value))))
        total = term if total is None else tape.add(total, term)
    return total


def ssim_weights(I1, I2):
    """Per-image scalar weights from mean Sobel magnitudes; 0.5/0.5 when both are flat."""
    axes = (-3, -2, -1)
    g1 = np.mean(sobel_gradient(I1), axis=axes)
    g2 = np.mean(sobel_gradient(I2), axis=axes)
    denom = g1 + g2
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, g1 / safe, 0.5), np.where(denom > 0, g2 / safe, 0.5)


@dataclass
class Stage2Terms:
    total: object
    intensity: object
    gradient: object
    structure: object


def stage2_terms(tape, If, I1, I2, beta1=20.0, beta2=20.0, beta3=15.0):
    i1, i2 = I1.value, I2.value
    _check_same(If.value, i1, i2)
    l_int = tape.mean_abs_diff(If, tape.const(np.maximum(i1, i2)))
    target_grad = np.maximum(sobel_gradient(i1), sobel_gradient(i2))
    l_grad = tape.mean_abs_diff(tape.sobel(If), tape.const(target_grad))
    w1, w2 = ssim_weights(i1, i2)
    s1, vjp1 = ssim_with_grad(i1, If.value)
    s2, vjp2 = ssim_with_grad(i2, If.value)
    n = np.size(s1)
    l_ssim_value = np.sum(w1 * (1.0 - s1) + w2 * (1.0 - s2)) / n

    def back(g):
        return (-(vjp1(g * w1 / n * np.ones_like(s1)) + vjp2(g * w2 / n * np.ones_like(s2))),)

    l_ssim = tape.custom(np.asarray(l_ssim_value), (If,), back)
    total = tape.add(tape.add(tape.scale(l_int, beta1), tape.scale(l_grad, beta2)), tape.scale(l_ssim, beta3))
    return Stage2Terms(total, l_int, l_grad, l_ssim)


def loss_stage1(I1p, I1, I2p, I2):
    tape = Tape(record=False)
    c = tape.const
    return float(stage1_terms(tape, c(np.asarray(I1p, float)), c(np.asarray(I1, float)),
                              c(np.asarray(I2p, float)), c(np.asarray(I2, float))).value)


def loss_stage2(If, I1, I2, beta1=20.0, beta2=20.0, beta3=15.0):
    tape = Tape(record=False)
    c = tape.const
    terms = stage2_terms(tape, c(np.asarray(If, float)), c(np.asarray(I1, float)), c(np.asarray(I2, float)),
                         beta1, beta2, beta3)
    return float(terms.total.value)
