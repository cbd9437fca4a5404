import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_conv(x, w):
    """Direct loop correlation with zero padding: x (H, W, C), w (O, C, kh, kw) -> (H, W, O)."""
    H, W, C = x.shape
    O, _, kh, kw = w.shape
    out = np.zeros((H, W, O))
    for o in range(O):
        for h in range(H):
            for col in range(W):
                acc = 0.0
                for c in range(C):
                    for i in range(kh):
                        for j in range(kw):
                            hh, cc = h + i - kh // 2, col + j - kw // 2
                            if 0 <= hh < H and 0 <= cc < W:
                                acc += w[o, c, i, j] * x[hh, cc, c]
                out[h, col, o] = acc
    return out
