"""Command-line entry point: ``lzsc {fuse,features,decompose,train,metrics,solve}``.

Exit codes: 0 success, 1 internal error, 2 user/input error.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import imageio
from .metrics import evaluate
from .networks import cast_params, dump_intermediates, fnet_forward, ifnet_forward, init_fnet, init_ifnet
from .tensor import ContractError
from .training import TrainConfig, TrainingError, train_stage1, train_stage2, write_loss_csv
from .weights_io import ArchiveError, load_weights, save_weights

log = logging.getLogger("lzsc")


class UserError(Exception):
    """Bad input from the command line; reported with exit code 2."""


# -- helpers ---------------------------------------------------------------------

def _load_nets(path, need):
    path = Path(path)
    if not path.is_file():
        raise UserError(f"weights file not found: {path}")
    try:
        nets = load_weights(path)
    except ArchiveError as exc:
        raise UserError(f"invalid weights file: {exc}") from exc
    if need not in nets:
        raise UserError(f"{path} does not contain {need} weights")
    return nets[need]


def _read(path):
    try:
        return imageio.read_rgb_or_gray(path)
    except imageio.ImageError as exc:
        raise UserError(str(exc)) from exc


def _crop_to_min(a, b):
    h = min(a.shape[0], b.shape[0])
    w = min(a.shape[1], b.shape[1])
    return a[:h, :w], b[:h, :w]


def fuse_images(img1, img2, fnet, color="ycbcr", resize_to_min=False, trace=False):
    """Fuse two [0, 1] images (gray or RGB). Returns (fused image, optional FusionTrace)."""
    if img1.shape[:2] != img2.shape[:2]:
        if not resize_to_min:
            raise UserError(f"image sizes differ: {img1.shape[:2]} vs {img2.shape[:2]} (use --resize-to-min)")
        img1, img2 = _crop_to_min(img1, img2)
    chroma = []
    lumas = []
    for img in (img1, img2):
        if img.ndim == 3:
            y, cb, cr = imageio.rgb_to_ycbcr(img)
            lumas.append(y)
            chroma.append((cb, cr))
        else:
            lumas.append(img)
    dtype = fnet.D_u1.dtype
    I1 = lumas[0][..., None].astype(dtype)
    I2 = lumas[1][..., None].astype(dtype)
    result = fnet_forward(I1, I2, fnet, trace=trace)
    fused, tr = result if trace else (result, None)
    fused = fused[..., 0].astype(np.float64)
    if color == "ycbcr":
        picked = imageio.chroma_source(*chroma)
        if picked is not None:
            fused = imageio.ycbcr_to_rgb(fused, *picked)
    return fused, tr


def _fuse_one(job):
    m1, m2, out, weights, color, resize = job
    fnet = _load_nets(weights, "fnet")
    fused, _ = fuse_images(_read(m1), _read(m2), fnet, color, resize)
    imageio.write_image(out, fused)
    return str(out)


def _pool_size():
    value = os.environ.get("LZSC_THREADS")
    return max(1, int(value)) if value else (os.cpu_count() or 1)


# -- commands ------------------------------------------------------------------

def cmd_fuse(args):
    m1, m2 = Path(args.m1), Path(args.m2)
    if m1.is_dir() or m2.is_dir():
        if not (m1.is_dir() and m2.is_dir()):
            raise UserError("--m1 and --m2 must both be files or both be directories")
        _load_nets(args.weights, "fnet")
        names = sorted({p.name for p in imageio.list_images(m1)} & {p.name for p in imageio.list_images(m2)})
        if not names:
            raise UserError(f"no matching image names in {m1} and {m2}")
        jobs = [(m1 / n, m2 / n, Path(args.out) / n, args.weights, args.color, args.resize_to_min) for n in names]
        with ProcessPoolExecutor(max_workers=_pool_size()) as pool:
            for written in pool.map(_fuse_one, jobs):
                log.info("wrote %s", written)
        return 0
    fnet = _load_nets(args.weights, "fnet")
    fused, tr = fuse_images(_read(m1), _read(m2), fnet, args.color, args.resize_to_min, trace=bool(args.trace))
    imageio.write_image(args.out, fused)
    if args.trace:
        dump_intermediates(tr, args.trace)
    return 0


def cmd_features(args):
    fnet = _load_nets(args.weights, "fnet")
    _, tr = fuse_images(_read(args.m1), _read(args.m2), fnet, "gray", args.resize_to_min, trace=True)
    written = dump_intermediates(tr, args.out)
    print(json.dumps({"files": [str(p) for p in written], "zero_fractions": tr.zero_fractions()}, indent=2))
    return 0


def cmd_decompose(args):
    ifnet = _load_nets(args.weights, "ifnet")
    img = _read(args.fused)
    if img.ndim == 3:
        img = imageio.luma(img)
    I1p, I2p, _, _ = ifnet_forward(img[..., None].astype(ifnet.D_x1.dtype), ifnet)
    out = Path(args.out)
    imageio.write_image(out / "source1.png", I1p[..., 0])
    imageio.write_image(out / "source2.png", I2p[..., 0])
    return 0


def cmd_train(args):
    try:
        pairs = imageio.load_pair_dir(args.data)
    except imageio.ImageError as exc:
        raise UserError(str(exc)) from exc
    cfg = TrainConfig(stage=args.stage, iterations=args.iters, batch_size=args.batch, crop_size=args.crop,
                      lr=args.lr, beta1=args.beta1, beta2=args.beta2, beta3=args.beta3, seed=args.seed,
                      checkpoint_every=args.checkpoint_every, checkpoint_path=str(args.out))
    rng = np.random.default_rng(args.seed)
    if args.init:
        init = load_weights(args.init)
        fnet = cast_params(init["fnet"], np.float64)
        ifnet = cast_params(init["ifnet"], np.float64) if "ifnet" in init else None
    else:
        fnet = init_fnet(rng, args.K, args.kernel_size, args.n_iters)
        ifnet = None
    if ifnet is None:
        ifnet = init_ifnet(rng, fnet.feature_channels, fnet.block_u1.kernel_size, fnet.block_u1.n_iters)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    if args.stage in ("1", "both"):
        result = train_stage1(pairs, fnet, ifnet, cfg)
        write_loss_csv(result.log, f"{stem}.stage1.csv")
    if args.stage in ("2", "both"):
        result = train_stage2(pairs, fnet, cfg)
        write_loss_csv(result.log, f"{stem}.stage2.csv")
    save_weights({"fnet": fnet, "ifnet": ifnet}, out)
    return 0


def cmd_metrics(args):
    imgs = []
    for path in (args.fused, args.src1, args.src2):
        img = _read(path)
        imgs.append(imageio.luma(img) if img.ndim == 3 else img)
    fused, s1, s2 = imgs
    if not (fused.shape == s1.shape == s2.shape):
        raise UserError(f"image sizes differ: {fused.shape}, {s1.shape}, {s2.shape}")
    print(json.dumps(evaluate(s1, s2, fused).to_dict()))
    return 0


def cmd_solve(args):
    from .solve_cli import SpecError, run_solve

    try:
        spec = _parse_spec(args.spec)
        report = run_solve(args.mode, spec)
    except SpecError as exc:
        print(json.dumps({"error": exc.message, "pointer": exc.pointer}), file=sys.stderr)
        return 2
    print(json.dumps(report, indent=2))
    return 0


def _parse_spec(text):
    from .solve_cli import SpecError

    path = Path(text)
    if not text.lstrip().startswith("{") and path.is_file():
        text = path.read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError("", f"spec is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise SpecError("", "spec must be a JSON object")
    return spec


# -- parser ------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="lzsc", description="l0 convolutional sparse coding image fusion")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuse", help="fuse two aligned images (or two directories of them)")
    f.add_argument("--m1", required=True)
    f.add_argument("--m2", required=True)
    f.add_argument("--weights", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--color", choices=("ycbcr", "gray"), default="ycbcr")
    f.add_argument("--trace", metavar="DIR")
    f.add_argument("--resize-to-min", action="store_true", help="crop both inputs to their common size")
    f.set_defaults(func=cmd_fuse)

    ft = sub.add_parser("features", help="dump unique/common feature maps for one pair")
    ft.add_argument("--m1", required=True)
    ft.add_argument("--m2", required=True)
    ft.add_argument("--weights", required=True)
    ft.add_argument("--out", required=True)
    ft.add_argument("--resize-to-min", action="store_true")
    ft.set_defaults(func=cmd_features)

    d = sub.add_parser("decompose", help="split a fused image into source estimates")
    d.add_argument("--fused", required=True)
    d.add_argument("--weights", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decompose)

    t = sub.add_parser("train", help="two-stage training on DIR/m1, DIR/m2 pairs")
    t.add_argument("--data", required=True)
    t.add_argument("--stage", choices=("1", "2", "both"), default="both")
    t.add_argument("--out", required=True, help="weights file to write")
    t.add_argument("--init", help="start from these weights (e.g. stage-I output for --stage 2)")
    t.add_argument("--iters", type=int, default=20000)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--crop", type=int, default=128)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--beta1", type=float, default=20.0)
    t.add_argument("--beta2", type=float, default=20.0)
    t.add_argument("--beta3", type=float, default=15.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--K", type=int, default=8)
    t.add_argument("--kernel-size", type=int, default=5)
    t.add_argument("--n-iters", type=int, default=4)
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("metrics", help="MI / SSIM / Qabf of a fused image as JSON")
    m.add_argument("--fused", required=True)
    m.add_argument("--src1", required=True)
    m.add_argument("--src2", required=True)
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("solve", help="run a reference sparse-coding solver on a JSON problem spec")
    s.add_argument("--mode", choices=("exhaustive", "nihta", "ista", "nihta-conv"), required=True)
    s.add_argument("--spec", required=True, help="JSON text or path to a JSON file")
    s.set_defaults(func=cmd_solve)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, ContractError, ArchiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
