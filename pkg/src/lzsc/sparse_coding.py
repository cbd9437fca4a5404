"""Training a single LZSC block as a convolutional sparse coder and scoring it
against convolutional ISTA at the same iteration count.

Data are signals I = D(z*) for one fixed unit-norm dictionary D and sparse
codes z*. The block is initialised from the hard-thresholding iteration for
D and then trained on reconstruction error plus code supervision. Both
solvers are scored on the l0 objective 0.5 ||I - D(z)||^2 + lam ||z||_0.
"""
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .lzsc_block import (IterationModuleParams, LzscBlockParams, ScheduleParams, block_apply, lzsc_forward,
                         softplus_inv)
from .solvers import adjoint_kernel, conv_l0_objective, conv_operator_norm, ista_conv, synthetic_csc
from .training import AdamState, adam_step


@dataclass
class CscProblem:
    D: np.ndarray        # (1, K, k, k)
    step: float          # 0.9 / ||D||^2
    lam: float
    signals: np.ndarray  # (n, H, W, 1)
    codes: np.ndarray    # (n, H, W, K)


def make_problem(seed, n, size=32, K=8, kernel_size=5, density=0.01, lam=0.05, D=None):
    rng = np.random.default_rng(seed)
    signals, codes = [], []
    for _ in range(n):
        I, z, D = synthetic_csc(rng, size, K, kernel_size, density, D=D)
        signals.append(I)
        codes.append(z)
    step = 0.9 / conv_operator_norm(D, codes[0].shape) ** 2
    return CscProblem(D, step, lam, np.stack(signals), np.stack(codes))


def dictionary_block(D, gain=0.5, n_iters=4, theta0=0.8, theta_decay=0.01, rho1=0.05):
    """Block whose modules all start as the hard-thresholding step z - gain * D^T(D z - I).

    The gain is far above the convergent step 1/||D||^2 on purpose: the fixed
    sigmoidal operator only yields exact zeros below theta - 0.3, so codes
    must live on a scale where thresholds near 1 are meaningful.
    """
    Dt = gain * adjoint_kernel(D)
    modules = [IterationModuleParams(W_u=Dt.copy(), W_d=D.copy(), W_u_prev=Dt.copy(), W_d_prev=D.copy(),
                                     W_e=Dt.copy()) for _ in range(n_iters)]
    w_rho = softplus_inv(np.log(2.0) / (1.0 - rho1))
    return LzscBlockParams(modules, ScheduleParams.from_realized(-theta_decay, softplus_inv(theta0), w_rho, 0.0))


def _loss(tape, block, D, I, z_true, code_weight):
    u = block_apply(tape, tape.const(I), block)
    r = tape.sub(tape.const(I), tape.conv(u, tape.const(D)))
    loss = tape.scale(tape.mean(tape.mul(r, r)), 0.5 * I[0].size)
    if code_weight:
        e = tape.sub(u, tape.const(z_true))
        loss = tape.add(loss, tape.scale(tape.mean(tape.mul(e, e)), 0.5 * code_weight * z_true[0].size))
    return loss


def _snapshot(params):
    return [arr.copy() for _, arr in params]


def _restore(params, saved):
    for (_, arr), value in zip(params, saved):
        arr[...] = value


def train_block(problem: CscProblem, n_iters=4, iterations=2000, batch_size=4, lr=3e-4, code_weight=1.0,
                seed=0, block=None, validation=None, eval_every=100):
    """Adam on per-signal 0.5||I - D(u)||^2 + 0.5*code_weight*||u - z*||^2. Returns (block, losses).

    The l0 count is not differentiable, so the surrogate can drift towards
    dense codes. With a ``validation`` problem the block is scored on the
    true l0 objective every ``eval_every`` steps and the best parameters seen
    (including the starting point) are restored at the end.
    """
    rng = np.random.default_rng(seed)
    if block is None:
        block = dictionary_block(problem.D, n_iters=n_iters)
    params = block.named_arrays("block")
    state = AdamState(lr=lr)
    losses = []
    best = None
    if validation is not None:
        best = (block_objectives(block, validation).mean(), _snapshot(params))
    for it in range(1, iterations + 1):
        idx = rng.choice(len(problem.signals), size=batch_size, replace=False)
        tape = Tape()
        loss = _loss(tape, block, problem.D, problem.signals[idx], problem.codes[idx], code_weight)
        tape.backward(loss)
        adam_step(state, params, {name: tape.grad(arr) for name, arr in params})
        losses.append(float(loss.value))
        if validation is not None and (it % eval_every == 0 or it == iterations):
            score = block_objectives(block, validation).mean()
            if score < best[0]:
                best = (score, _snapshot(params))
    if best is not None:
        _restore(params, best[1])
    return block, losses


def block_objectives(block, problem: CscProblem):
    codes = lzsc_forward(problem.signals, block)
    return np.array([conv_l0_objective(I, problem.D, z, problem.lam) for I, z in zip(problem.signals, codes)])


def ista_objectives(problem: CscProblem, theta, iters):
    W_u = problem.step * adjoint_kernel(problem.D)
    return np.array([conv_l0_objective(I, problem.D, ista_conv(I, problem.D, W_u, theta, iters), problem.lam)
                     for I in problem.signals])


def tune_ista(problem: CscProblem, iters, grid):
    """Grid-search the ISTA threshold on ``problem``; returns (best theta, mean objective per theta)."""
    scores = {float(t): float(ista_objectives(problem, t, iters).mean()) for t in grid}
    return min(scores, key=scores.get), scores
