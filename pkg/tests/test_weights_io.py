import struct

import numpy as np
import pytest

from lzsc.networks import cast_params, fnet_forward, init_fnet, init_ifnet
from lzsc.weights_io import ArchiveError, load_weights, read_archive, save_weights, write_archive


@pytest.fixture
def nets():
    r = np.random.default_rng(2)
    return {"fnet": init_fnet(r, K=4, kernel_size=3, n_iters=2), "ifnet": init_ifnet(r, K=4, kernel_size=3, n_iters=2)}


@pytest.fixture
def archive(nets, tmp_path):
    path = tmp_path / "w.lzsc"
    save_weights(nets, path)
    return path


def test_roundtrip_bitwise(tmp_path, rng):
    entries = [("a", rng.standard_normal((2, 3))), ("b.c", rng.standard_normal(4).astype(np.float32)),
               ("scalar", np.array(1.5))]
    write_archive(entries, tmp_path / "x")
    back = read_archive(tmp_path / "x")
    assert list(back) == ["a", "b.c", "scalar"]
    for name, arr in entries:
        assert back[name].dtype == arr.dtype and np.array_equal(back[name], arr)


def test_empty_archive_bytes(tmp_path):
    write_archive([], tmp_path / "e")
    assert (tmp_path / "e").read_bytes() == b"LZSC\x01\x00\x00\x00\x00\x00\x00\x00"


def test_entry_layout(tmp_path):
    write_archive([("w", np.array([[1.0, 2.0]], dtype=np.float32))], tmp_path / "one")
    expected = (b"LZSC" + struct.pack("<II", 1, 1) + struct.pack("<I", 1) + b"w" + bytes([0, 2])
                + struct.pack("<II", 1, 2) + np.array([1.0, 2.0], "<f4").tobytes())
    assert (tmp_path / "one").read_bytes() == expected


def test_truncation_names_entry(archive, tmp_path):
    data = archive.read_bytes()
    cut = tmp_path / "cut"
    cut.write_bytes(data[:-3])
    count = struct.unpack_from("<I", data, 8)[0]
    with pytest.raises(ArchiveError, match=f"unexpected EOF at entry {count - 1}"):
        read_archive(cut)
    cut.write_bytes(data[:20])
    with pytest.raises(ArchiveError, match="unexpected EOF at entry 0"):
        read_archive(cut)


def test_bad_magic_and_version(archive, tmp_path):
    data = bytearray(archive.read_bytes())
    bad = tmp_path / "bad"
    bad.write_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(ArchiveError, match="bad magic"):
        read_archive(bad)
    data[4] = 2
    bad.write_bytes(bytes(data))
    with pytest.raises(ArchiveError, match="unsupported version 2"):
        read_archive(bad)


def test_trailing_bytes(archive, tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(archive.read_bytes() + b"\0")
    with pytest.raises(ArchiveError, match="trailing"):
        read_archive(bad)


def test_shape_mismatch_names_entry(archive, tmp_path):
    entries = read_archive(archive)
    entries["fnet.D_u1"] = np.zeros((1, 4, 5, 5), dtype=np.float32)
    write_archive(list(entries.items()), tmp_path / "m")
    with pytest.raises(ArchiveError, match="fnet.D_u1"):
        load_weights(tmp_path / "m")


def test_missing_entry(archive, tmp_path):
    entries = read_archive(archive)
    del entries["ifnet.D_x2"]
    write_archive(list(entries.items()), tmp_path / "m")
    with pytest.raises(ArchiveError, match="ifnet.D_x2"):
        load_weights(tmp_path / "m")


def test_invalid_schedule_rejected(archive, tmp_path):
    entries = read_archive(archive)
    entries["fnet.block_c.schedule.b_theta"] = np.array(np.nan, dtype=np.float32)
    write_archive(list(entries.items()), tmp_path / "s")
    with pytest.raises(ArchiveError, match="schedule"):
        load_weights(tmp_path / "s")


def test_topology_request_checked(archive):
    with pytest.raises(ArchiveError, match="meta.K"):
        load_weights(archive, K=8)


def test_save_load_save_identical(archive, tmp_path):
    nets = load_weights(archive)
    save_weights(nets, tmp_path / "again")
    assert (tmp_path / "again").read_bytes() == archive.read_bytes()


def test_float32_forward_bitwise(nets, archive, rng):
    loaded = load_weights(archive)["fnet"]
    I1, I2 = rng.random((2, 10, 10, 1)).astype(np.float32)
    assert np.array_equal(fnet_forward(I1, I2, loaded), fnet_forward(I1, I2, cast_params(nets["fnet"], np.float32)))


def test_float64_archive(nets, tmp_path):
    save_weights(nets, tmp_path / "d", dtype=np.float64)
    loaded = load_weights(tmp_path / "d")
    for (_, a), (_, b) in zip(loaded["fnet"].named_arrays(), nets["fnet"].named_arrays()):
        assert np.array_equal(a, b)


def test_unsupported_dtype(tmp_path):
    with pytest.raises(ArchiveError, match="dtype"):
        write_archive([("i", np.arange(3))], tmp_path / "i")


def test_unreadable(tmp_path):
    with pytest.raises(OSError, match="cannot read"):
        read_archive(tmp_path / "missing")
