"""Regenerate the golden .dajc streams under tests/golden.

Run only when the stream format or the simulator changes on purpose;
the tests compare fresh encodes against these bytes.
"""

import hashlib
import sys
from pathlib import Path

import numpy as np

from dajc.corpus import load_image
from dajc.stream import Frame, encode_frame

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"


def golden_cases():
    """Name, frame and encoder keyword arguments of every golden stream."""
    yy, xx = np.mgrid[0:16, 0:24]
    ramp = Frame.from_array(((xx * 9 + yy * 5) % 256).astype(np.uint8))
    camera = load_image("camera")
    crop = Frame.from_array(camera.pixels[200:264, 200:264])
    return [
        ("ramp_24x16_noise_off", ramp, dict(noise=False)),
        ("ramp_24x16_seed7", ramp, dict(seed=7)),
        ("camera_64x64_seed0", crop, dict(seed=0)),
        ("camera_64x64_thresh0", crop, dict(seed=0, v_thresh=0.0)),
    ]


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, frame, kwargs in golden_cases():
        data = encode_frame(frame, **kwargs).data
        (GOLDEN / f"{name}.dajc").write_bytes(data)
        lines.append(f"{hashlib.sha256(data).hexdigest()}  {name}.dajc")
    (GOLDEN / "SHA256SUMS").write_text("\n".join(lines) + "\n")
    print("\n".join(lines), file=sys.stderr)


if __name__ == "__main__":
    main()
