"""FNet (fusion) and IFNet (inverse fusion) built from LZSC blocks."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .lzsc_block import LzscBlockParams, block_apply, init_block
from .tensor import ContractError, check_kernel


@dataclass
class FNetParams:
    block_u1: LzscBlockParams
    block_u2: LzscBlockParams
    block_c: LzscBlockParams
    D_u1: np.ndarray
    D_u2: np.ndarray
    G_c: np.ndarray
    G_u1: np.ndarray
    G_u2: np.ndarray

    def __post_init__(self):
        K = self.block_u1.feature_channels
        if {self.block_u2.feature_channels, self.block_c.feature_channels} != {K}:
            raise ContractError("all FNet blocks must share the feature channel count")
        if self.block_u1.input_channels != 1 or self.block_u2.input_channels != 1:
            raise ContractError("unique-feature blocks take single-channel images")
        if self.block_c.input_channels != 2:
            raise ContractError("common-feature block takes the 2-channel residual stack")
        for name in ("D_u1", "D_u2", "G_c", "G_u1", "G_u2"):
            kernel = check_kernel(getattr(self, name))
            if kernel.shape[:2] != (1, K):
                raise ContractError(f"{name} must map {K} channels to 1, got shape {kernel.shape}")

    @property
    def feature_channels(self):
        return self.block_u1.feature_channels

    def named_arrays(self, prefix="fnet"):
        out = []
        for name in ("block_u1", "block_u2", "block_c"):
            out += getattr(self, name).named_arrays(f"{prefix}.{name}")
        out += [(f"{prefix}.{name}", getattr(self, name)) for name in ("D_u1", "D_u2", "G_c", "G_u1", "G_u2")]
        return out


@dataclass
class IFNetParams:
    block_x1: LzscBlockParams
    block_x2: LzscBlockParams
    D_x1: np.ndarray
    D_x2: np.ndarray

    def __post_init__(self):
        K = self.block_x1.feature_channels
        if self.block_x2.feature_channels != K:
            raise ContractError("IFNet blocks must share the feature channel count")
        for block in (self.block_x1, self.block_x2):
            if block.input_channels != 1:
                raise ContractError("IFNet blocks take the single-channel fused image")
        for name in ("D_x1", "D_x2"):
            kernel = check_kernel(getattr(self, name))
            if kernel.shape[:2] != (1, K):
                raise ContractError(f"{name} must map {K} channels to 1, got shape {kernel.shape}")

    def named_arrays(self, prefix="ifnet"):
        out = self.block_x1.named_arrays(f"{prefix}.block_x1") + self.block_x2.named_arrays(f"{prefix}.block_x2")
        out += [(f"{prefix}.D_x1", self.D_x1), (f"{prefix}.D_x2", self.D_x2)]
        return out


@dataclass
class FusionTrace:
    u1: np.ndarray
    u2: np.ndarray
    c: np.ndarray
    I_hat1: np.ndarray
    I_hat2: np.ndarray
    part_common: np.ndarray
    part_u1: np.ndarray
    part_u2: np.ndarray
    fused: np.ndarray

    def zero_fractions(self):
        return {name: float(np.mean(getattr(self, name) == 0)) for name in ("u1", "u2", "c")}


def _decoder(rng, K, k, dtype):
    bound = 1.0 / np.sqrt(K * k * k)
    return rng.uniform(-bound, bound, size=(1, K, k, k)).astype(dtype)


def init_fnet(rng, K=8, kernel_size=5, n_iters=4, dtype=np.float64):
    blocks = [init_block(rng, c, K, kernel_size, n_iters, dtype=dtype) for c in (1, 1, 2)]
    decoders = [_decoder(rng, K, kernel_size, dtype) for _ in range(5)]
    return FNetParams(*blocks, *decoders)


def init_ifnet(rng, K=8, kernel_size=5, n_iters=4, dtype=np.float64):
    blocks = [init_block(rng, 1, K, kernel_size, n_iters, dtype=dtype) for _ in range(2)]
    return IFNetParams(*blocks, _decoder(rng, K, kernel_size, dtype), _decoder(rng, K, kernel_size, dtype))


def fnet_apply(tape, I1, I2, p: FNetParams, trace=False):
    """FNet on tape nodes; returns the fused node and, with ``trace``, a FusionTrace."""
    if I1.shape != I2.shape:
        raise ContractError(f"source images differ in shape: {I1.shape} vs {I2.shape}")
    if I1.shape[-1] != 1:
        raise ContractError(f"FNet expects single-channel sources, got {I1.shape[-1]} channels")
    u1 = block_apply(tape, I1, p.block_u1)
    u2 = block_apply(tape, I2, p.block_u2)
    I_hat1 = tape.sub(I1, tape.conv(u1, tape.leaf(p.D_u1)))
    I_hat2 = tape.sub(I2, tape.conv(u2, tape.leaf(p.D_u2)))
    c = block_apply(tape, tape.concat(I_hat1, I_hat2), p.block_c)
    part_c = tape.conv(c, tape.leaf(p.G_c))
    part_u1 = tape.conv(u1, tape.leaf(p.G_u1))
    part_u2 = tape.conv(u2, tape.leaf(p.G_u2))
    fused = tape.add(tape.add(part_c, part_u1), part_u2)
    if not trace:
        return fused
    tr = FusionTrace(u1.value, u2.value, c.value, I_hat1.value, I_hat2.value,
                     part_c.value, part_u1.value, part_u2.value, fused.value)
    if not np.array_equal((tr.part_common + tr.part_u1) + tr.part_u2, tr.fused):
        raise AssertionError("fused image differs from the sum of its parts")
    return fused, tr


def ifnet_apply(tape, If, p: IFNetParams):
    if If.shape[-1] != 1:
        raise ContractError(f"IFNet expects a single-channel fused image, got {If.shape[-1]} channels")
    x1 = block_apply(tape, If, p.block_x1)
    x2 = block_apply(tape, If, p.block_x2)
    return tape.conv(x1, tape.leaf(p.D_x1)), tape.conv(x2, tape.leaf(p.D_x2)), x1, x2


def fnet_forward(I1, I2, p: FNetParams, trace=False):
    """Fuse two aligned single-channel images (..., H, W, 1). No clipping is applied."""
    tape = Tape(record=False)
    out = fnet_apply(tape, tape.const(np.asarray(I1)), tape.const(np.asarray(I2)), p, trace)
    if trace:
        return out[0].value, out[1]
    return out.value


def ifnet_forward(If, p: IFNetParams):
    """Returns (I1', I2', x1, x2)."""
    tape = Tape(record=False)
    return tuple(v.value for v in ifnet_apply(tape, tape.const(np.asarray(If)), p))


def _normalized(img):
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round(255.0 * (img - lo) / (hi - lo)).astype(np.uint8)


def dump_intermediates(trace: FusionTrace, out_dir):
    """Write u1, u2, c (max over channels) and the three reconstruction parts plus the fused image.

    Each map is saved as a min-max normalized 8-bit PNG and as a raw
    float32 ``.npy`` tensor. Returns the list of written paths.
    """
    from PIL import Image

    out_dir = Path(out_dir)
    maps = {
        "u1": trace.u1, "u2": trace.u2, "c": trace.c,
        "part_common": trace.part_common, "part_u1": trace.part_u1, "part_u2": trace.part_u2,
        "fused": trace.fused,
    }
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, arr in maps.items():
            arr = np.asarray(arr)
            if arr.ndim == 4:
                arr = arr[0]
            raw = out_dir / f"{name}.npy"
            np.save(raw, arr.astype(np.float32))
            projected = np.abs(arr).max(axis=-1) if name in ("u1", "u2", "c") else arr[..., 0]
            png = out_dir / f"{name}.png"
            Image.fromarray(_normalized(projected)).save(png)
            written += [png, raw]
    except OSError as exc:
        raise OSError(f"failed writing intermediates to {out_dir}: {exc}") from exc
    return written


def cast_params(net, dtype):
    """Copy of ``net`` with every array converted to ``dtype``."""
    import copy

    out = copy.deepcopy(net)
    blocks = [out.block_u1, out.block_u2, out.block_c] if isinstance(out, FNetParams) else [out.block_x1, out.block_x2]
    for block in blocks:
        for m in block.modules:
            for name, arr in m.kernels():
                setattr(m, name, arr.astype(dtype))
        for name, arr in block.schedule.arrays():
            setattr(block.schedule, name, arr.astype(dtype))
    decoders = ("D_u1", "D_u2", "G_c", "G_u1", "G_u2") if isinstance(out, FNetParams) else ("D_x1", "D_x2")
    for name in decoders:
        setattr(out, name, getattr(out, name).astype(dtype))
    return out
