"""
Regenerate the bundled grayscale test corpus from scikit-image sample data.

Development-only helper; the package itself never imports scikit-image.

    python tools/make_corpus.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np
import skimage.data
from skimage.color import rgb2gray
from skimage.transform import resize
from skimage.util import img_as_ubyte

MAX_SIDE = 512

# name -> how to bring it down to at most 512 px per side
IMAGES = {
    "camera": "keep",
    "astronaut": "keep",
    "chelsea": "keep",
    "coffee": "crop",
    "rocket": "crop",
    "coins": "keep",
    "moon": "keep",
    "retina": "resize",
    "cell": "crop",
    "hubble_deep_field": "crop",
}


def gray_u8(img):
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    return img_as_ubyte(img)


def fit(img, how):
    if how == "resize" and max(img.shape) > MAX_SIDE:
        scale = MAX_SIDE / max(img.shape)
        shape = (round(img.shape[0] * scale), round(img.shape[1] * scale))
        img = img_as_ubyte(resize(img, shape, anti_aliasing=True))
    h, w = img.shape
    top = max(0, (h - MAX_SIDE) // 2)
    left = max(0, (w - MAX_SIDE) // 2)
    return img[top : top + MAX_SIDE, left : left + MAX_SIDE]


def write_pgm(path, img):
    h, w = img.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def main(outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    for name, how in IMAGES.items():
        img = fit(gray_u8(getattr(skimage.data, name)()), how)
        write_pgm(outdir / f"{name}.pgm", img)
        print(f"{name:20s} {img.shape[1]}x{img.shape[0]}")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "dajc" / "data" / "corpus"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
