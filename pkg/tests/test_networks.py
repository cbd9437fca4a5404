import copy

import numpy as np
import pytest
from PIL import Image

from lzsc.networks import (dump_intermediates, fnet_forward, ifnet_forward, init_fnet, init_ifnet)
from lzsc.tensor import ContractError


@pytest.fixture
def fnet():
    return init_fnet(np.random.default_rng(0), K=4, kernel_size=3, n_iters=2)


@pytest.fixture
def ifnet():
    return init_ifnet(np.random.default_rng(1), K=4, kernel_size=3, n_iters=2)


def test_zero_inputs_give_zero(fnet):
    z = np.zeros((12, 12, 1))
    assert not fnet_forward(z, z, fnet).any()


def test_branch_symmetry(fnet, rng):
    sym = copy.deepcopy(fnet)
    sym.block_u2 = copy.deepcopy(sym.block_u1)
    sym.D_u2, sym.G_u2 = sym.D_u1.copy(), sym.G_u1.copy()
    for m in sym.block_c.modules:
        # input-channel-facing kernels made symmetric under swapping the two residual channels
        for name in ("W_u", "W_e", "W_u_prev"):
            k = getattr(m, name)
            k[:, 1] = k[:, 0]
        for name in ("W_d", "W_d_prev"):
            k = getattr(m, name)
            k[1] = k[0]
    I1, I2 = rng.random((2, 10, 10, 1))
    assert np.max(np.abs(fnet_forward(I1, I2, sym) - fnet_forward(I2, I1, sym))) < 1e-10


def test_reconstruction_identity_and_shapes(fnet, rng):
    I1, I2 = rng.random((2, 9, 11, 1))
    fused, tr = fnet_forward(I1, I2, fnet, trace=True)
    assert fused.shape == (9, 11, 1)
    assert tr.u1.shape == tr.u2.shape == tr.c.shape == (9, 11, 4)
    assert tr.I_hat1.shape == (9, 11, 1)
    assert np.array_equal((tr.part_common + tr.part_u1) + tr.part_u2, fused)


def test_no_internal_clipping(fnet):
    I = np.full((8, 8, 1), 3.0)
    fused = fnet_forward(I, I, fnet)
    assert fused.max() > 1.0 or fused.min() < 0.0


def test_zero_fractions_reported(rng):
    net = init_fnet(np.random.default_rng(3), K=4, kernel_size=3, n_iters=2)
    for block in (net.block_u1, net.block_u2, net.block_c):
        block.schedule.b_theta[...] = np.log(np.expm1(0.5))
    _, tr = fnet_forward(*rng.random((2, 12, 12, 1)), net, trace=True)
    fr = tr.zero_fractions()
    assert set(fr) == {"u1", "u2", "c"}
    assert all(0 < v <= 1 for v in fr.values())


def test_deterministic(fnet, rng):
    I1, I2 = rng.random((2, 10, 10, 1))
    assert np.array_equal(fnet_forward(I1, I2, fnet), fnet_forward(I1, I2, fnet))


def test_size_mismatch(fnet):
    with pytest.raises(ContractError):
        fnet_forward(np.zeros((8, 8, 1)), np.zeros((8, 9, 1)), fnet)


def test_multichannel_rejected(fnet):
    with pytest.raises(ContractError):
        fnet_forward(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), fnet)


def test_ifnet_zero_and_shapes(ifnet, rng):
    a, b, x1, x2 = ifnet_forward(np.zeros((10, 7, 1)), ifnet)
    assert not a.any() and not b.any()
    a, b, x1, x2 = ifnet_forward(rng.random((10, 7, 1)), ifnet)
    assert a.shape == b.shape == (10, 7, 1)
    assert x1.shape == x2.shape == (10, 7, 4)


def test_ifnet_features_have_exact_zeros(rng):
    net = init_ifnet(np.random.default_rng(4), K=4, kernel_size=3, n_iters=2)
    for block in (net.block_x1, net.block_x2):
        block.schedule.b_theta[...] = np.log(np.expm1(0.5))
    _, _, x1, x2 = ifnet_forward(rng.random((12, 12, 1)), net)
    assert np.any(x1 == 0) and np.any(x2 == 0)


def test_ifnet_channel_check(ifnet):
    with pytest.raises(ContractError):
        ifnet_forward(np.zeros((6, 6, 2)), ifnet)


def test_block_kernel_contract(fnet):
    broken = copy.deepcopy(fnet)
    broken.G_c = np.zeros((2, 4, 3, 3))
    with pytest.raises(ContractError):
        type(broken)(**broken.__dict__)


class TestDump:
    def test_fourteen_files_and_identity(self, fnet, rng, tmp_path):
        _, tr = fnet_forward(*rng.random((2, 12, 12, 1)), fnet, trace=True)
        written = dump_intermediates(tr, tmp_path / "trace")
        assert len(written) == 14
        assert len(list((tmp_path / "trace").glob("*.png"))) == 7
        assert len(list((tmp_path / "trace").glob("*.npy"))) == 7
        parts = [np.load(tmp_path / "trace" / f"{n}.npy") for n in ("part_common", "part_u1", "part_u2")]
        fused = np.load(tmp_path / "trace" / "fused.npy")
        assert np.max(np.abs(parts[0] + parts[1] + parts[2] - fused)) < 1e-6

    def test_zero_trace_black(self, fnet, tmp_path):
        z = np.zeros((8, 8, 1))
        _, tr = fnet_forward(z, z, fnet, trace=True)
        for path in dump_intermediates(tr, tmp_path):
            if path.suffix == ".png":
                assert not np.asarray(Image.open(path)).any()

    def test_unwritable_directory(self, fnet, rng, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        _, tr = fnet_forward(*rng.random((2, 8, 8, 1)), fnet, trace=True)
        with pytest.raises(OSError, match="file"):
            dump_intermediates(tr, blocker / "sub")
