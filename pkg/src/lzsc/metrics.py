"""Fusion quality metrics: mutual information, SSIM and Qabf.

Aggregation for a fused image F of sources A and B follows the usual
fusion-benchmark convention: MI(A,F) + MI(B,F), the mean of SSIM(A,F) and
SSIM(B,F), and a single edge-strength-weighted Qabf over both sources.
VIF is not implemented and is reported as null.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .losses import ssim as _ssim
from .tensor import ContractError, sobel_components

BINS = 256

# Xydeas-Petrovic sigmoid constants
GAMMA_G, KAPPA_G, SIGMA_G = 0.9994, -15.0, 0.5
GAMMA_A, KAPPA_A, SIGMA_A = 0.9879, -22.0, 0.8


@dataclass
class MetricReport:
    mi: float
    ssim: float
    qabf: float
    vif: float = None

    def to_dict(self):
        return asdict(self)


def _image(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3 and x.shape[-1] == 1:
        x = x[..., 0]
    if x.ndim != 2:
        raise ContractError(f"metrics expect single-channel 2-D images, got shape {x.shape}")
    return x


def _same(*images):
    if len({im.shape for im in images}) != 1:
        raise ContractError(f"metric inputs differ in size: {[im.shape for im in images]}")


def quantize(x):
    """Map [0, 1] intensities to integer levels 0..255."""
    return np.clip(np.rint(np.asarray(x) * (BINS - 1)), 0, BINS - 1).astype(np.intp)


def entropy(a):
    p = np.bincount(quantize(_image(a)).ravel(), minlength=BINS) / _image(a).size
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def mutual_information(a, b):
    """Joint-histogram MI in bits between two [0, 1] images (256 levels)."""
    a, b = _image(a), _image(b)
    _same(a, b)
    joint = np.bincount((quantize(a) * BINS + quantize(b)).ravel(), minlength=BINS * BINS)
    pab = joint.reshape(BINS, BINS) / a.size
    pa = pab.sum(axis=1)
    pb = pab.sum(axis=0)
    nz = pab > 0
    mi = np.sum(pab[nz] * np.log2(pab[nz] / np.outer(pa, pb)[nz]))
    return max(float(mi), 0.0)


def fusion_mi(a, b, f):
    return mutual_information(a, f) + mutual_information(b, f)


def ssim_metric(a, f):
    return _ssim(_image(a), _image(f))


def _edges(img):
    g = sobel_components(img[..., None])
    gx, gy = g[..., 0], g[..., 1]
    return np.hypot(gx, gy), np.mod(np.arctan2(gy, gx), np.pi)


def _preservation(g_src, a_src, g_f, a_f, normalized):
    big = np.maximum(g_src, g_f)
    small = np.minimum(g_src, g_f)
    G = np.divide(small, big, out=np.zeros_like(big), where=big > 0)
    diff = np.abs(a_src - a_f)
    diff = np.minimum(diff, np.pi - diff)
    A = np.where((g_src > 0) & (g_f > 0), 1.0 - diff / (np.pi / 2), 0.0)
    qg = GAMMA_G / (1.0 + np.exp(KAPPA_G * (G - SIGMA_G)))
    qa = GAMMA_A / (1.0 + np.exp(KAPPA_A * (A - SIGMA_A)))
    q = qg * qa
    if normalized:
        q /= (GAMMA_G / (1.0 + np.exp(KAPPA_G * (1.0 - SIGMA_G)))) * (GAMMA_A / (1.0 + np.exp(KAPPA_A * (1.0 - SIGMA_A))))
    return q


def qabf(a, b, f, normalized=True):
    """Edge-transfer quality of ``f`` w.r.t. sources ``a`` and ``b``, in [0, 1].

    Edge strength is the Sobel magnitude and orientation the gradient
    direction taken modulo pi, compared by the smaller angle between the
    two lines. With ``normalized`` the per-pixel preservation is divided
    by its value for perfect transfer, so ``qabf(a, a, a) == 1``.
    """
    a, b, f = _image(a), _image(b), _image(f)
    _same(a, b, f)
    ga, aa = _edges(a)
    gb, ab = _edges(b)
    gf, af = _edges(f)
    qa = _preservation(ga, aa, gf, af, normalized)
    qb = _preservation(gb, ab, gf, af, normalized)
    denom = np.sum(ga + gb)
    if denom == 0:
        return 0.0
    return float(np.sum(qa * ga + qb * gb) / denom)


def evaluate(src1, src2, fused):
    return MetricReport(
        mi=fusion_mi(src1, src2, fused),
        ssim=0.5 * (ssim_metric(src1, fused) + ssim_metric(src2, fused)),
        qabf=qabf(src1, src2, fused),
    )
