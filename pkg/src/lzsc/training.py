"""Adam, data handling and the two-stage training driver."""
import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .losses import stage1_terms, stage2_terms
from .networks import FNetParams, IFNetParams, fnet_apply, ifnet_apply

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str = "both"
    iterations: int = 20000
    batch_size: int = 16
    crop_size: int = 128
    lr: float = 1e-4
    beta1: float = 20.0
    beta2: float = 20.0
    beta3: float = 15.0
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str = None

    def __post_init__(self):
        if self.stage not in ("1", "2", "both", "I", "II"):
            raise ValueError(f"stage must be 1, 2 or both, got {self.stage!r}")
        if self.iterations < 0 or self.batch_size < 1 or self.crop_size < 1:
            raise ValueError("iterations, batch_size and crop_size must be positive")
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads):
    """In-place bias-corrected Adam update.

    ``params`` is a list of (name, array); ``grads`` maps name -> gradient.
    Schedule scalars are stored unconstrained, so their constraints hold
    after any step without projection.
    """
    for name, _ in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} at Adam step {state.t + 1}")
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params:
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


# -- data ----------------------------------------------------------------------

def _blob(yy, xx, cy, cx, sy, sx):
    return np.exp(-(((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2) / 2.0)


def synthetic_pair(rng, size=64, noise=0.01):
    """One aligned pair: a shared scene plus modality-specific content.

    Modality 1 is thermal-like (shared structure dimmed, bright compact
    targets); modality 2 is visible-like (shared structure plus oriented
    texture patches). Both carry small Gaussian noise; values in [0, 1].
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    shared = np.zeros((size, size))
    for _ in range(rng.integers(2, 5)):
        y0, x0 = rng.integers(0, size - 8, size=2)
        h, w = rng.integers(8, size // 2, size=2)
        shared[y0:y0 + h, x0:x0 + w] += rng.uniform(0.2, 0.4)
    for _ in range(2):
        shared += rng.uniform(0.1, 0.3) * _blob(yy, xx, *rng.uniform(0, size, 2), *rng.uniform(4, 12, 2))
    targets = np.zeros_like(shared)
    for _ in range(rng.integers(1, 4)):
        targets += rng.uniform(0.4, 0.7) * _blob(yy, xx, *rng.uniform(4, size - 4, 2), *rng.uniform(1.5, 4, 2))
    texture = np.zeros_like(shared)
    for _ in range(rng.integers(1, 3)):
        y0, x0 = rng.integers(0, size - 16, size=2)
        angle = rng.uniform(0, np.pi)
        freq = rng.uniform(0.3, 0.8)
        stripes = 0.5 + 0.5 * np.sin(freq * (np.cos(angle) * xx + np.sin(angle) * yy))
        mask = np.zeros_like(shared)
        mask[y0:y0 + 16, x0:x0 + 16] = 1.0
        texture += rng.uniform(0.2, 0.35) * stripes * mask
    i1 = 0.5 * shared + targets + noise * rng.standard_normal(shared.shape)
    i2 = shared + texture + noise * rng.standard_normal(shared.shape)
    return np.clip(i1, 0, 1)[..., None], np.clip(i2, 0, 1)[..., None]


def synthetic_pairs(n, size=64, seed=0):
    rng = np.random.default_rng(seed)
    return [synthetic_pair(rng, size) for _ in range(n)]


def sample_batch(rng, pairs, batch_size, crop_size):
    """Random crop plus random horizontal/vertical flips, applied identically to both images."""
    if not pairs:
        raise TrainingError("training set is empty")
    b1, b2 = [], []
    for idx in rng.integers(0, len(pairs), size=batch_size):
        i1, i2 = pairs[idx]
        H, W = i1.shape[:2]
        ch, cw = min(crop_size, H), min(crop_size, W)
        y0 = rng.integers(0, H - ch + 1)
        x0 = rng.integers(0, W - cw + 1)
        c1, c2 = i1[y0:y0 + ch, x0:x0 + cw], i2[y0:y0 + ch, x0:x0 + cw]
        if rng.random() < 0.5:
            c1, c2 = c1[:, ::-1], c2[:, ::-1]
        if rng.random() < 0.5:
            c1, c2 = c1[::-1], c2[::-1]
        b1.append(c1)
        b2.append(c2)
    return np.ascontiguousarray(np.stack(b1)), np.ascontiguousarray(np.stack(b2))


# -- single steps ---------------------------------------------------------------

def stage1_loss_and_grads(I1, I2, fnet: FNetParams, ifnet: IFNetParams, record=True):
    tape = Tape(record=record)
    i1, i2 = tape.const(I1), tape.const(I2)
    fused = fnet_apply(tape, i1, i2, fnet)
    i1p, i2p, _, _ = ifnet_apply(tape, fused, ifnet)
    loss = stage1_terms(tape, i1p, i1, i2p, i2)
    parts = _stage1_parts(i1p.value, I1, i2p.value, I2)
    if not record:
        return float(loss.value), parts, None
    tape.backward(loss)
    named = fnet.named_arrays() + ifnet.named_arrays()
    return float(loss.value), parts, {name: tape.grad(arr) for name, arr in named}


def _stage1_parts(i1p, i1, i2p, i2):
    from .losses import loss_stage1

    zero = np.zeros_like(i1)
    return {"modality1": loss_stage1(i1p, i1, zero, zero), "modality2": loss_stage1(zero, zero, i2p, i2)}


def stage2_loss_and_grads(I1, I2, fnet: FNetParams, beta=(20.0, 20.0, 15.0), record=True):
    tape = Tape(record=record)
    i1, i2 = tape.const(I1), tape.const(I2)
    fused = fnet_apply(tape, i1, i2, fnet)
    terms = stage2_terms(tape, fused, i1, i2, *beta)
    parts = {"intensity": float(terms.intensity.value), "gradient": float(terms.gradient.value),
             "structure": float(terms.structure.value)}
    if not record:
        return float(terms.total.value), parts, None
    tape.backward(terms.total)
    return float(terms.total.value), parts, {name: tape.grad(arr) for name, arr in fnet.named_arrays()}


# -- drivers ------------------------------------------------------------------

@dataclass
class TrainResult:
    log: list
    iterations: int


def _checkpoint(cfg, fnet, ifnet, it):
    if not cfg.checkpoint_path:
        return
    from .weights_io import save_weights

    save_weights({"fnet": fnet, "ifnet": ifnet} if ifnet is not None else {"fnet": fnet}, cfg.checkpoint_path)
    log.info("checkpoint written at iteration %d to %s", it, cfg.checkpoint_path)


def _run(step, params, pairs, cfg, fnet, ifnet, stage_seed):
    rng = np.random.default_rng([cfg.seed, stage_seed])
    state = AdamState(lr=cfg.lr)
    rows = []
    for it in range(1, cfg.iterations + 1):
        I1, I2 = sample_batch(rng, pairs, cfg.batch_size, cfg.crop_size)
        loss, parts, grads = step(I1, I2)
        if not np.isfinite(loss):
            _checkpoint(cfg, fnet, ifnet, it)
            raise TrainingError(f"non-finite loss at iteration {it}")
        rows.append({"iteration": it, "total": loss, **parts})
        adam_step(state, params, grads)
        if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            _checkpoint(cfg, fnet, ifnet, it)
        if it % 100 == 0:
            log.info("iter %d loss %.5f", it, loss)
    return TrainResult(rows, cfg.iterations)


def train_stage1(pairs, fnet: FNetParams, ifnet: IFNetParams, cfg: TrainConfig):
    """Jointly train FNet and IFNet on the inverse-fusion reconstruction loss. Updates params in place."""
    params = fnet.named_arrays() + ifnet.named_arrays()
    return _run(lambda a, b: stage1_loss_and_grads(a, b, fnet, ifnet), params, pairs, cfg, fnet, ifnet, 1)


def train_stage2(pairs, fnet: FNetParams, cfg: TrainConfig):
    """Train FNet alone on the fusion loss. Updates params in place; IFNet is not involved."""
    beta = (cfg.beta1, cfg.beta2, cfg.beta3)
    return _run(lambda a, b: stage2_loss_and_grads(a, b, fnet, beta), fnet.named_arrays(), pairs, cfg, fnet, None, 2)


def write_loss_csv(rows, path):
    path = Path(path)
    if not rows:
        path.write_text("iteration,total\n")
        return
    columns = list(rows[0])
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] if c == "iteration" else repr(float(row[c])) for c in columns])


def stage_config(cfg: TrainConfig, **overrides):
    return replace(cfg, **overrides)
