"""8-bit PNG/PGM reading and writing plus the YCbCr split used for colour sources."""
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

SUFFIXES = (".png", ".pgm")


class ImageError(ValueError):
    pass


def read_rgb_or_gray(path):
    """Return a float array in [0, 1]: (H, W) for grayscale files, (H, W, 3) for colour."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("1", "L", "LA"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def luma(rgb):
    """BT.601 luma of an (H, W, 3) array."""
    return rgb @ np.array([0.299, 0.587, 0.114])


def rgb_to_ycbcr(rgb):
    y = luma(rgb)
    cb = 0.5 + rgb @ np.array([-0.168736, -0.331264, 0.5])
    cr = 0.5 + rgb @ np.array([0.5, -0.418688, -0.081312])
    return y, cb, cr


def ycbcr_to_rgb(y, cb, cr):
    cb = cb - 0.5
    cr = cr - 0.5
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def read_gray(path):
    img = read_rgb_or_gray(path)
    return luma(img) if img.ndim == 3 else img


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, img):
    """Write a [0, 1] image (H, W) or (H, W, 3) as 8-bit; values are clipped here."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(to_uint8(img)).save(path)
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def chroma_source(*chromas):
    """Pick chroma planes: those with variance from a colour-bearing source, averaged if several."""
    carriers = [(cb, cr) for cb, cr in chromas if np.var(cb) + np.var(cr) > 1e-12]
    if not carriers:
        return None
    cb = np.mean([c[0] for c in carriers], axis=0)
    cr = np.mean([c[1] for c in carriers], axis=0)
    return cb, cr


def list_images(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in SUFFIXES)


def load_pair_dir(directory):
    """Read aligned pairs laid out as DIR/m1/NAME + DIR/m2/NAME (grayscale).

    Raises ImageError naming any files that lack a partner.
    """
    directory = Path(directory)
    d1, d2 = directory / "m1", directory / "m2"
    if not d1.is_dir() or not d2.is_dir():
        raise ImageError(f"{directory} must contain m1/ and m2/ subdirectories")
    n1 = {p.name: p for p in list_images(d1)}
    n2 = {p.name: p for p in list_images(d2)}
    unpaired = sorted(set(n1) ^ set(n2))
    if unpaired:
        raise ImageError(f"unpaired files in {directory}: {', '.join(unpaired)}")
    pairs = []
    for name in sorted(n1):
        a, b = read_gray(n1[name]), read_gray(n2[name])
        if a.shape != b.shape:
            raise ImageError(f"pair {name} has mismatched sizes {a.shape} vs {b.shape}")
        pairs.append((a[..., None], b[..., None]))
    if not pairs:
        raise ImageError(f"no image pairs found under {directory}")
    return pairs
