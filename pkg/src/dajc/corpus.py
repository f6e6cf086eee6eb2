"""Bundled grayscale test images (P5 PGM, at most 512 px per side)."""

from importlib import resources

from .stream import parse_pgm

ACCEPTANCE_SET = ("camera", "astronaut", "chelsea", "coffee", "rocket")
CALIBRATION_SET = ACCEPTANCE_SET + ("coins", "moon", "retina", "cell", "hubble_deep_field")


def _dir():
    return resources.files("dajc") / "data" / "corpus"


def corpus_names():
    return sorted(p.name[:-4] for p in _dir().iterdir() if p.name.endswith(".pgm"))


def load_image(name):
    path = _dir() / f"{name}.pgm"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled image named {name!r}")
    return parse_pgm(path.read_bytes())


def load_corpus(names=CALIBRATION_SET):
    return [(n, load_image(n)) for n in names]
