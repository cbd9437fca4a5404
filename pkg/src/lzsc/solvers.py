"""Classical sparse-coding solvers used as oracles and baselines.

Dense problems minimise 0.5 ||x - D z||^2 + lam ||z||_0; the convolutional
solvers run the same fixed-point iterations with convolutions in place of
D and D^T (the step size is folded into ``W_u``).
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .tensor import ContractError, conv2d_same
from .thresholding import hard_threshold, soft_threshold

MAX_ATOMS = 20
MAX_SUPPORT = 4


@dataclass
class SolveReport:
    iterations: int
    objective_trace: list = field(default_factory=list)
    final_support: tuple = ()


def l0_objective(x, D, z, lam):
    r = x - D @ z
    return 0.5 * float(r @ r) + lam * int(np.count_nonzero(z))


def exhaustive_l0(x, D, lam, max_support=MAX_SUPPORT):
    """Global minimiser of the dense l0 problem by enumerating supports up to ``max_support``."""
    x = np.asarray(x, dtype=float)
    D = np.asarray(D, dtype=float)
    m = D.shape[1]
    if m > MAX_ATOMS or max_support > MAX_SUPPORT:
        raise ContractError(
            f"exhaustive search limited to m <= {MAX_ATOMS} atoms and support <= {MAX_SUPPORT}; "
            f"got m={m}, max_support={max_support}"
        )
    best_z = np.zeros(m)
    best = l0_objective(x, D, best_z, lam)
    for size in range(1, min(max_support, m) + 1):
        for support in combinations(range(m), size):
            cols = list(support)
            coef, *_ = np.linalg.lstsq(D[:, cols], x, rcond=None)
            z = np.zeros(m)
            z[cols] = coef
            obj = l0_objective(x, D, z, lam)
            if obj < best:
                best, best_z = obj, z
    return best_z, best


def nihta_dense(x, D, theta, mu, iters, lam=None):
    """z <- H_theta(z - mu D^T (D z - x)) from z = 0.

    The reported objective uses ``lam`` if given, else the l0 weight
    theta**2 / (2 mu) that makes H_theta the exact proximal step.
    """
    if mu <= 0:
        raise ContractError(f"step size must be positive, got {mu}")
    x = np.asarray(x, dtype=float)
    D = np.asarray(D, dtype=float)
    lam = theta ** 2 / (2 * mu) if lam is None else lam
    z = np.zeros(D.shape[1])
    trace = [l0_objective(x, D, z, lam)]
    for _ in range(iters):
        z = hard_threshold(z - mu * D.T @ (D @ z - x), theta)
        trace.append(l0_objective(x, D, z, lam))
    return z, SolveReport(iters, trace, tuple(np.flatnonzero(z)))


def _check_conv_operands(I, W_d, W_u):
    C = np.shape(I)[-1]
    if W_u.shape[1] != C or W_d.shape[0] != C or W_u.shape[0] != W_d.shape[1]:
        raise ContractError(
            f"need W_u: {C}->K and W_d: K->{C}; got W_u {W_u.shape}, W_d {W_d.shape}"
        )


def _conv_iterate(I, W_d, W_u, theta, iters, shrink):
    I = np.asarray(I, dtype=float)
    _check_conv_operands(I, W_d, W_u)
    z = np.zeros(I.shape[:-1] + (W_u.shape[0],))
    for _ in range(iters):
        z = shrink(z - conv2d_same(conv2d_same(z, W_d) - I, W_u), theta)
    return z


def ista_conv(I, W_d, W_u, theta, iters):
    """Convolutional ISTA: z <- S_theta(z - W_u(W_d(z) - I))."""
    return _conv_iterate(I, W_d, W_u, theta, iters, soft_threshold)


def nihta_conv(I, W_d, W_u, theta, iters):
    """Convolutional NIHTA: z <- H_theta(z - W_u(W_d(z) - I))."""
    return _conv_iterate(I, W_d, W_u, theta, iters, hard_threshold)


def conv_l0_objective(I, D, z, lam):
    """0.5 ||I - D(z)||^2 + lam ||z||_0 for a convolutional dictionary ``D`` (K -> C)."""
    r = np.asarray(I, dtype=float) - conv2d_same(z, D)
    return 0.5 * float(np.sum(r * r)) + lam * int(np.count_nonzero(z))


def adjoint_kernel(D):
    """Kernel whose correlation is the adjoint of correlating with ``D``."""
    return np.ascontiguousarray(D[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))


def planted_instance(rng, n=8, m=6, k=2, low=1.0, high=2.0):
    """Unit-norm random dictionary and a k-sparse code with magnitudes in [low, high]."""
    D = rng.standard_normal((n, m))
    D /= np.linalg.norm(D, axis=0)
    support = np.sort(rng.choice(m, size=k, replace=False))
    z = np.zeros(m)
    z[support] = rng.uniform(low, high, size=k) * rng.choice([-1.0, 1.0], size=k)
    return D, z, tuple(support)


def conv_operator_norm(D, shape, iters=50, seed=0):
    """Power-iteration estimate of the largest singular value of z -> D(z) on ``shape`` feature maps."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(shape)
    Dt = adjoint_kernel(D)
    s = 0.0
    for _ in range(iters):
        z /= np.linalg.norm(z)
        z = conv2d_same(conv2d_same(z, D), Dt)
        s = np.sqrt(np.linalg.norm(z))
    return float(s)


def synthetic_csc(rng, size=32, K=4, kernel_size=5, density=0.02, low=0.5, high=1.5, D=None):
    """Signal I = D(z*) with a unit-norm convolutional dictionary and sparse z*."""
    if D is None:
        D = rng.standard_normal((1, K, kernel_size, kernel_size))
        D /= np.sqrt(np.sum(D ** 2, axis=(0, 2, 3), keepdims=True))
    K = D.shape[1]
    z = np.zeros((size, size, K))
    mask = rng.random(z.shape) < density
    z[mask] = rng.uniform(low, high, mask.sum()) * rng.choice([-1.0, 1.0], mask.sum())
    return conv2d_same(z, D), z, D
