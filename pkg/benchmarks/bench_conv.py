"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_conv.py [--repeat 5] [--json out.json]

Covers the three hot paths of a training step: convolution forward, the
weight-gradient reduction, and the sigmoidal threshold (forward + backward),
plus one full FNet forward pass per backend. Each row also reports the max
abs difference between the two backends on the same inputs.
"""
import argparse
import json
import os
import sys
import timeit

import numpy as np

from lzsc import _backend
from lzsc.networks import fnet_forward, init_fnet

CASES = [
    # (label, B, H, W, C, O, k)
    ("encode 1->8 k5", 4, 64, 64, 1, 8, 5),
    ("mix 8->8 k5", 4, 64, 64, 8, 8, 5),
    ("mix 8->8 k9", 2, 128, 128, 8, 8, 9),
    ("decode 8->1 k5", 4, 64, 64, 8, 1, 5),
]


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(repeat):
    rng = np.random.default_rng(0)
    nthreads = _backend.num_threads()
    rows = []
    for label, B, H, W, C, O, k in CASES:
        x = rng.standard_normal((B, H, W, C))
        w = rng.standard_normal((O, C, k, k))
        g = rng.standard_normal((B, H, W, O))
        for op, call in (
            ("conv_forward", lambda m: m.conv_forward(x, w, nthreads)),
            ("conv_grad_weights", lambda m: m.conv_grad_weights(x, g, k, k, nthreads)),
        ):
            rows.append(_row(f"{op} [{label}]", call, repeat))
    u = rng.standard_normal((4, 64, 64, 8)) * 0.3
    gu = rng.standard_normal(u.shape)
    rows.append(_row("threshold fwd+bwd [4x64x64x8]",
                     lambda m: (m.threshold_forward(u, 0.1, 0.1, 100.0),
                                m.threshold_backward(u, gu, 0.1, 0.1, 100.0)[0]), repeat))
    rows.append(_fnet_row(repeat))
    return rows


def _row(label, call, repeat):
    out = {"case": label}
    results = {}
    for name in ("python", "compiled"):
        _backend.use(name)
        module = _backend.kernels
        results[name] = call(module)
        out[name] = _time(lambda: call(module), repeat)
    a, b = results["python"], results["compiled"]
    if isinstance(a, tuple):
        a, b = np.concatenate([np.ravel(v) for v in a]), np.concatenate([np.ravel(v) for v in b])
    out["max_abs_diff"] = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    out["speedup"] = out["python"] / out["compiled"]
    return out


def _fnet_row(repeat):
    rng = np.random.default_rng(1)
    fnet = init_fnet(rng, K=8, kernel_size=5, n_iters=4)
    I1 = rng.random((1, 128, 128, 1))
    I2 = rng.random((1, 128, 128, 1))
    return _row("fnet_forward [128x128, K=8, N=4]", lambda m: fnet_forward(I1, I2, fnet), repeat)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="also write the rows to this file")
    args = parser.parse_args(argv)
    try:
        _backend.use("compiled")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = bench(args.repeat)
    print(f"threads={_backend.num_threads()} (LZSC_THREADS={os.environ.get('LZSC_THREADS', 'unset')})")
    print(f"{'case':<42}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}{'max diff':>11}")
    for r in rows:
        print(f"{r['case']:<42}{1e3 * r['python']:>12.2f}{1e3 * r['compiled']:>13.2f}"
              f"{r['speedup']:>8.1f}x{r['max_abs_diff']:>11.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
