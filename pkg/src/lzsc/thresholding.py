"""Hard, soft and sigmoidal thresholding operators.

The sigmoidal operator is the smooth stand-in for hard thresholding used
inside the unrolled solver:

    T(x) = sgn(x) * (|x| - alpha*theta) / (1 + exp(-gamma * (|x| - theta)))

with an exact-zero clamp where ``gamma * (|x| - theta) < -30``.
"""
from dataclasses import dataclass

import numpy as np

from .tensor import ContractError

CLAMP = -30.0


@dataclass(frozen=True)
class SigmoidalParams:
    alpha: float = 0.1
    gamma: float = 100.0
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.gamma > 0:
            raise ContractError(f"gamma must be positive, got {self.gamma}")
        if not self.theta > 0:
            raise ContractError(f"theta must be positive, got {self.theta}")


def _check_theta(theta):
    if np.any(np.asarray(theta) < 0):
        raise ContractError(f"threshold must be non-negative, got {theta}")


def hard_threshold(x, theta):
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= theta, 0.0, x)


def soft_threshold(x, theta):
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    return np.maximum(np.abs(x) - theta, 0.0) * np.sign(x)


def _sigmoidal_parts(x, alpha, gamma, theta):
    a = np.abs(x)
    z = gamma * (a - theta)
    active = z >= CLAMP
    # clamped entries never reach exp(); keeps exp(-z) <= e^30
    sig = 1.0 / (1.0 + np.exp(-np.where(active, z, 0.0)))
    return a, sig, active


def sigmoidal(x, theta, alpha=0.1, gamma=100.0):
    """Array form of T_{alpha,gamma,theta}; ``theta`` may be a scalar or broadcastable array."""
    x = np.asarray(x)
    a, sig, active = _sigmoidal_parts(x, alpha, gamma, theta)
    return np.where(active, np.sign(x) * (a - alpha * theta) * sig, 0.0).astype(x.dtype, copy=False)


def sigmoidal_grad(x, theta, alpha=0.1, gamma=100.0):
    """Partial derivatives (dT/dx, dT/dtheta), elementwise; zero inside the clamp region.

    At x = 0 the one-sided derivative for x -> 0+ is returned for dT/dx.
    """
    x = np.asarray(x)
    a, sig, active = _sigmoidal_parts(x, alpha, gamma, theta)
    s = np.sign(x)
    dsig = sig * (1.0 - sig)
    shifted = a - alpha * theta
    d_dx = sig + shifted * gamma * dsig
    d_dtheta = s * (-alpha * sig - shifted * gamma * dsig)
    zero = np.zeros_like(d_dx)
    return np.where(active, d_dx, zero), np.where(active, d_dtheta, zero)


def sigmoidal_threshold(x, p: SigmoidalParams):
    return sigmoidal(np.asarray(x, dtype=float), p.theta, p.alpha, p.gamma)


def sigmoidal_threshold_grad(x, p: SigmoidalParams):
    return sigmoidal_grad(np.asarray(x, dtype=float), p.theta, p.alpha, p.gamma)
