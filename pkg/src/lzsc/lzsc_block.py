"""The unrolled l0 convolutional sparse-coding block.

Each iteration module computes

    u[k+1] = T_{0.1,100,theta_k}( (1+rho_k) (u[k] - W_u(W_d(u[k])))
                                  - rho_k (u[k-1] - W_u'(W_d'(u[k-1])))
                                  + W_e(I) )

starting from u[0] = u[-1] = 0. The thresholds decrease and the momentum
weights increase with k through a softplus schedule:

    theta_k = sp(w_theta k + b_theta),                 w_theta = -sp(w_theta_raw)
    rho_k   = (sp(w_rho k + b_rho) - sp(b_rho)) / sp(w_rho k + b_rho),
                                                       w_rho = sp(w_rho_raw)
"""
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .tensor import ContractError, check_kernel

ALPHA = 0.1
GAMMA = 100.0
KERNEL_NAMES = ("W_u", "W_d", "W_u_prev", "W_d_prev", "W_e")
SCHEDULE_NAMES = ("w_theta_raw", "b_theta", "w_rho_raw", "b_rho")


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    return float(np.log(np.expm1(y)))


@dataclass
class IterationModuleParams:
    W_u: np.ndarray       # (K, C, k, k)
    W_d: np.ndarray       # (C, K, k, k)
    W_u_prev: np.ndarray  # (K, C, k, k)
    W_d_prev: np.ndarray  # (C, K, k, k)
    W_e: np.ndarray       # (K, C, k, k)

    def kernels(self):
        return [(name, getattr(self, name)) for name in KERNEL_NAMES]

    def validate(self, C, K):
        size = self.W_u.shape[2:]
        expect = {"W_u": (K, C), "W_d": (C, K), "W_u_prev": (K, C), "W_d_prev": (C, K), "W_e": (K, C)}
        for name, kernel in self.kernels():
            check_kernel(kernel)
            if kernel.shape[:2] != expect[name] or kernel.shape[2:] != size:
                raise ContractError(
                    f"{name} has shape {kernel.shape}, expected {expect[name] + tuple(size)}"
                )


@dataclass
class ScheduleParams:
    """Unconstrained schedule scalars, stored as 0-d arrays so they can be updated in place."""

    w_theta_raw: np.ndarray
    b_theta: np.ndarray
    w_rho_raw: np.ndarray
    b_rho: np.ndarray

    @classmethod
    def from_values(cls, w_theta_raw, b_theta, w_rho_raw, b_rho, dtype=np.float64):
        return cls(*(np.array(v, dtype=dtype) for v in (w_theta_raw, b_theta, w_rho_raw, b_rho)))

    @classmethod
    def from_realized(cls, w_theta, b_theta, w_rho, b_rho, dtype=np.float64):
        """Build from constrained values (w_theta < 0, w_rho > 0)."""
        if not (w_theta < 0 and w_rho > 0):
            raise ContractError(f"need w_theta < 0 and w_rho > 0, got {w_theta}, {w_rho}")
        return cls.from_values(softplus_inv(-w_theta), b_theta, softplus_inv(w_rho), b_rho, dtype)

    @property
    def w_theta(self):
        return -softplus(self.w_theta_raw)

    @property
    def w_rho(self):
        return softplus(self.w_rho_raw)

    def arrays(self):
        return [(name, getattr(self, name)) for name in SCHEDULE_NAMES]


@dataclass
class LzscBlockParams:
    modules: list
    schedule: ScheduleParams
    input_channels: int = field(init=False)
    feature_channels: int = field(init=False)

    def __post_init__(self):
        if not self.modules:
            raise ContractError("an LZSC block needs at least one iteration module")
        self.feature_channels, self.input_channels = self.modules[0].W_u.shape[:2]
        for m in self.modules:
            m.validate(self.input_channels, self.feature_channels)

    @property
    def n_iters(self):
        return len(self.modules)

    @property
    def kernel_size(self):
        return self.modules[0].W_u.shape[2]

    def named_arrays(self, prefix):
        out = []
        for k, m in enumerate(self.modules):
            out += [(f"{prefix}.im{k}.{name}", arr) for name, arr in m.kernels()]
        out += [(f"{prefix}.schedule.{name}", arr) for name, arr in self.schedule.arrays()]
        return out


def theta_k(s: ScheduleParams, k):
    if k < 0:
        raise ContractError(f"iteration index must be >= 0, got {k}")
    return float(softplus(s.w_theta * k + s.b_theta))


def rho_k(s: ScheduleParams, k):
    if k < 0:
        raise ContractError(f"iteration index must be >= 0, got {k}")
    top = softplus(s.w_rho * k + s.b_rho)
    return float((top - softplus(s.b_rho)) / top)


def validate_schedule(s: ScheduleParams, n_iters):
    """Reject schedules whose realized values break the constraints (non-finite or underflowed)."""
    for name, arr in s.arrays():
        if not np.isfinite(arr).all():
            raise ContractError(f"schedule.{name} is not finite")
    if not s.w_theta < 0:
        raise ContractError(f"realized w_theta must be < 0, got {s.w_theta}")
    if not s.w_rho > 0:
        raise ContractError(f"realized w_rho must be > 0, got {s.w_rho}")
    thetas = [theta_k(s, k) for k in range(n_iters)]
    rhos = [rho_k(s, k) for k in range(n_iters)]
    if rhos[0] != 0.0:
        raise ContractError(f"rho_0 must be exactly 0, got {rhos[0]}")
    if min(thetas) <= 0:
        raise ContractError("theta_k must stay positive")
    if any(not 0.0 <= r < 1.0 for r in rhos):
        raise ContractError("rho_k must lie in [0, 1)")


def _schedule_vars(tape, s, k):
    """theta_k and rho_k as tape nodes so gradients reach the raw schedule scalars."""
    w_t = tape.neg(tape.softplus(tape.leaf(s.w_theta_raw)))
    theta = tape.softplus(tape.add(tape.scale(w_t, float(k)), tape.leaf(s.b_theta)))
    b_rho = tape.leaf(s.b_rho)
    w_r = tape.softplus(tape.leaf(s.w_rho_raw))
    top = tape.softplus(tape.add(tape.scale(w_r, float(k)), b_rho))
    rho = tape.div(tape.sub(top, tape.softplus(b_rho)), top)
    return theta, rho


def _residual(tape, u, W_u, W_d):
    return tape.sub(u, tape.conv(tape.conv(u, tape.leaf(W_d)), tape.leaf(W_u)))


def im_apply(tape, u_k, u_km1, I, m: IterationModuleParams, theta, rho):
    """One iteration module on tape nodes. ``u_k``/``u_km1`` may be None for all-zero states."""
    pre = tape.conv(I, tape.leaf(m.W_e))
    if u_k is not None:
        one_plus = tape.add(tape.const(np.ones((), dtype=np.asarray(rho.value).dtype)), rho)
        pre = tape.add(tape.mul(one_plus, _residual(tape, u_k, m.W_u, m.W_d)), pre)
    if u_km1 is not None:
        pre = tape.sub(pre, tape.mul(rho, _residual(tape, u_km1, m.W_u_prev, m.W_d_prev)))
    return tape.threshold(pre, theta, ALPHA, GAMMA)


def block_apply(tape, I, p: LzscBlockParams, states=None):
    """Run all iteration modules on tape node ``I``; optionally collect u[1..N] into ``states``."""
    if I.shape[-1] != p.input_channels:
        raise ContractError(f"block expects {p.input_channels} input channels, got {I.shape[-1]}")
    u_prev, u = None, None
    for k, m in enumerate(p.modules):
        theta, rho = _schedule_vars(tape, p.schedule, k)
        u_prev, u = u, im_apply(tape, u, u_prev, I, m, theta, rho)
        if states is not None:
            states.append(u.value)
    return u


def im_forward(u_k, u_km1, I, m: IterationModuleParams, theta, rho):
    """Plain-array iteration module with explicit states and scalar theta, rho."""
    C, K = m.W_d.shape[:2]
    for name, arr, ch in (("u_k", u_k, K), ("u_km1", u_km1, K), ("I", I, C)):
        if np.shape(arr)[-1] != ch:
            raise ContractError(f"{name} has {np.shape(arr)[-1]} channels, expected {ch}")
    if np.shape(u_k) != np.shape(u_km1) or np.shape(u_k)[:-1] != np.shape(I)[:-1]:
        raise ContractError("u_k, u_km1 and I must share batch and spatial shape")
    tape = Tape(record=False)
    out = im_apply(tape, tape.const(np.asarray(u_k)), tape.const(np.asarray(u_km1)), tape.const(np.asarray(I)),
                   m, tape.const(np.asarray(theta, dtype=float)), tape.const(np.asarray(rho, dtype=float)))
    return out.value


def lzsc_forward(I, p: LzscBlockParams, trace=False):
    """Sparse code u[N] for input ``I`` (..., H, W, C); with ``trace`` also the list u[1..N]."""
    tape = Tape(record=False)
    states = [] if trace else None
    u = block_apply(tape, tape.const(np.asarray(I)), p, states)
    return (u.value, states) if trace else u.value


def init_block(rng, input_channels, feature_channels, kernel_size=5, n_iters=4,
               theta0=0.1, rho1=0.2, theta_decay=0.05, dtype=np.float64):
    """Uniform(+-1/sqrt(fan_in)) kernels; schedule set so theta_0 = theta0 and rho_1 = rho1."""
    C, K, k = input_channels, feature_channels, kernel_size

    def kernel(out_ch, in_ch):
        bound = 1.0 / np.sqrt(in_ch * k * k)
        return rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k)).astype(dtype)

    modules = [
        IterationModuleParams(W_u=kernel(K, C), W_d=kernel(C, K), W_u_prev=kernel(K, C),
                              W_d_prev=kernel(C, K), W_e=kernel(K, C))
        for _ in range(n_iters)
    ]
    # rho_1 = 1 - sp(b_rho) / sp(w_rho + b_rho) with b_rho = 0
    w_rho = softplus_inv(np.log(2.0) / (1.0 - rho1))
    schedule = ScheduleParams.from_realized(-theta_decay, softplus_inv(theta0), w_rho, 0.0, dtype=dtype)
    return LzscBlockParams(modules, schedule)
