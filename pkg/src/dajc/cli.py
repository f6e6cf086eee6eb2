"""
Command-line front end.

    dajc encode IMAGE.pgm [-o OUT.dajc] [--config CFG.json] [--thresh-mv MV] [--seed N]
    dajc decode IN.dajc [-o OUT.pgm] [--calib CAL.json] [--ref REF.pgm] [--csv ROWS.csv]
    dajc calibrate [-o CAL.json] [--mismatch-sigma S] [--parasitic-ff C] [-N 16]
    dajc sweep --kind thresh|framesize|noise [--values ...] [--out-dir DIR]

Exit codes: 0 success, 1 I/O error, 2 malformed input file, 3 bad configuration.
Every command that writes files also writes ``<output>.manifest.json``.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calib import calibrate_chip, evaluate_uplift, load_calibration, save_calibration
from .config import RunConfig
from .corpus import ACCEPTANCE_SET, CALIBRATION_SET, load_corpus
from .errors import ConfigError, FormatError
from .jpeg_core import quality_report
from .nonideal import input_referred_noise
from .stream import Frame, StreamHeader, decode_frame, encode_frame, load_pgm, save_pgm

EXIT_IO, EXIT_FORMAT, EXIT_CONFIG = 1, 2, 3

SWEEP_DEFAULTS = {
    "thresh": [0, 5, 10, 15, 20, 25, 28, 35, 45, 60],
    "framesize": [32, 64, 128, 256, 512],
    "noise": [75, 150, 300, 600, 1200],
}

# CSV columns written by each sweep kind
SWEEP_COLUMNS = {
    "thresh": ["thresh_mv", "significant_fraction", "energy_ratio", "psnr_db", "compression_ratio"],
    "framesize": [
        "size", "blocks", "samples", "conversions", "adc_energy_j",
        "baseline_energy_j", "baseline_energy_per_sample_j", "energy_ratio",
    ],
    "noise": ["temperature_k", "input_noise_uv", "significant_fraction", "psnr_db"],
}


@dataclass
class RunManifest:
    command: str
    config_path: str
    seeds: dict
    inputs: list
    output_dir: str
    outputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    argv: list = field(default_factory=list)
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def worker_count():
    env = os.environ.get("DAJC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"DAJC_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("DAJC_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Apply ``fn`` to ``items`` on worker threads; results keep input order."""
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(fn, items))


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "thresh_mv": getattr(args, "thresh_mv", None),
        "seed": getattr(args, "seed", None),
        "mismatch_sigma": getattr(args, "mismatch_sigma", None),
        "mismatch_seed": getattr(args, "mismatch_seed", None),
        "parasitic_ff": getattr(args, "parasitic_ff", None),
    }
    if getattr(args, "no_noise", False):
        overrides["noise"] = False
    return cfg.replace(**overrides)


def _manifest(args, cfg, inputs, outputs):
    out_dir = str(Path(outputs[0]).parent) if outputs else "."
    return RunManifest(
        command=args.command,
        config_path=args.config or "",
        seeds={"seed": cfg.seed, "mismatch_seed": cfg.mismatch_seed},
        inputs=[str(p) for p in inputs],
        output_dir=out_dir,
        outputs=[str(p) for p in outputs],
        config=cfg.to_dict(),
        argv=list(sys.argv[1:]),
    )


def _images(args, default):
    if getattr(args, "images", None):
        return [(Path(p).stem, load_pgm(p)) for p in args.images]
    return load_corpus(default)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_encode(args):
    cfg = _load_config(args)
    frame = load_pgm(args.input)
    if args.calib:
        load_calibration(args.calib)  # only checked; the flag tells the decoder to expect one
    res = encode_frame(
        frame, cfg.chip(), cfg.adc(), v_thresh=cfg.v_thresh, seed=cfg.seed,
        noise=cfg.noise, temperature=cfg.temperature, calibrated=bool(args.calib),
    )
    out = Path(args.output or Path(args.input).with_suffix(".dajc"))
    out.write_bytes(res.data)
    _manifest(args, cfg, [args.input], [out]).write(f"{out}.manifest.json")
    e = res.energy
    print(f"wrote {out} ({len(res.data)} bytes)")
    print(f"blocks={res.blocks} tokens={res.tokens} conversions={e.conversions}")
    print(f"significant_fraction={e.significant_fraction:.4f} energy_ratio={e.ratio:.2f}")
    print(f"adc_energy_j={e.adc_energy:.4e} baseline_energy_j={e.baseline_energy:.4e}")
    print(f"compression_ratio={res.compression_ratio:.2f}")
    return 0


def cmd_decode(args):
    data = Path(args.input).read_bytes()
    cfg = RunConfig.load(args.config) if args.config else None
    adc = cfg.adc() if cfg else None
    q_inv = None
    if args.calib:
        q_inv = load_calibration(args.calib).q_inv
    elif cfg is not None:
        header = StreamHeader.unpack(data)
        rails = cfg.replace(v_min=header.v_min_mv / 1000.0, v_max=header.v_max_mv / 1000.0)
        q_inv = 1.0 / rails.nominal().coefficient_gain()
    frame = decode_frame(data, q_inv, adc)
    out = Path(args.output or Path(args.input).with_suffix(".pgm"))
    save_pgm(frame, out)
    inputs = [args.input] + [p for p in (args.calib, args.ref) if p]
    _manifest(args, cfg or RunConfig(), inputs, [out]).write(f"{out}.manifest.json")
    print(f"wrote {out} ({frame.width}x{frame.height})")
    if args.ref:
        ref = load_pgm(args.ref)
        if (ref.width, ref.height) != (frame.width, frame.height):
            raise FormatError("reference image size does not match the stream")
        q = quality_report(ref.pixels, frame.pixels)
        print(f"psnr_db={q.psnr_db:.3f} ssim={q.ssim:.4f} mse={q.mse:.4f}")
        if args.csv:
            path = Path(args.csv)
            new = not path.exists()
            with path.open("a", newline="") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(["input", "reference", "psnr_db", "ssim", "mse"])
                w.writerow([args.input, args.ref, f"{q.psnr_db:.4f}", f"{q.ssim:.5f}", f"{q.mse:.4f}"])
    return 0


def cmd_calibrate(args):
    cfg = _load_config(args)
    chip = cfg.chip()
    gains, table = calibrate_chip(
        chip, seed=cfg.seed, noise_averaging=args.n, noise=cfg.noise, temperature=cfg.temperature
    )
    out = Path(args.output)
    save_calibration(
        out, gains, seed=cfg.seed, noise_averaging=args.n, config_hash=chip.config_hash(),
        mismatch_sigma=cfg.mismatch_sigma, mismatch_seed=cfg.mismatch_seed,
        parasitic_ff=cfg.parasitic_ff,
    )
    # the report keeps every coefficient unless a threshold is asked for
    v_thresh = args.thresh_mv / 1000.0 if args.thresh_mv is not None else 0.0
    frames = _images(args, CALIBRATION_SET)
    results = parallel_map(
        lambda item: evaluate_uplift(
            [item], chip, table.q_inv, v_thresh=v_thresh, seed=cfg.seed,
            noise=cfg.noise, adc_cfg=cfg.adc(),
        )[0],
        frames,
    )
    report = Path(args.report or out.with_suffix(".report.csv"))
    with report.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "psnr_before_db", "psnr_after_db", "delta_db"])
        for r in results:
            w.writerow([r.name, f"{r.psnr_ideal:.4f}", f"{r.psnr_calibrated:.4f}", f"{r.uplift:.4f}"])
    _manifest(args, cfg, [name for name, _ in frames], [out, report]).write(f"{out}.manifest.json")
    for r in results:
        print(f"{r.name:20s} before={r.psnr_ideal:6.2f} dB after={r.psnr_calibrated:6.2f} dB")
    median = float(np.median([r.uplift for r in results]))
    print(f"wrote {out}; gain-model residual={gains.residual:.4f}")
    print(f"median_delta_db={median:.3f}")
    return 0


def _encode_stats(frames, cfg, chip, v_thresh, temperature):
    """Pooled energy and mean PSNR of encoding ``frames``."""
    energy = None
    psnrs = []
    tokens = 0
    bits = pixels = 0
    for _, frame in frames:
        res = encode_frame(
            frame, chip, cfg.adc(), v_thresh=v_thresh, seed=cfg.seed,
            noise=cfg.noise, temperature=temperature,
        )
        energy = res.energy if energy is None else energy + res.energy
        dec = decode_frame(res.data, 1.0 / cfg.nominal().coefficient_gain(), cfg.adc())
        psnrs.append(quality_report(frame.pixels, dec.pixels).psnr_db)
        tokens += res.tokens
        bits += res.bits_out
        pixels += res.pixels
    return energy, float(np.mean(psnrs)), 8 * pixels / bits


def sweep_rows(kind, values, frames, cfg):
    chip = cfg.chip()

    def thresh_point(mv):
        e, p, cr = _encode_stats(frames, cfg, chip, mv / 1000.0, cfg.temperature)
        return [mv, e.significant_fraction, e.ratio, p, cr]

    def framesize_point(size):
        size = int(size)
        crops = []
        for name, f in frames:
            s = min(size, f.width, f.height)
            crops.append((name, Frame.from_array(f.pixels[:s, :s])))
        e, _, _ = _encode_stats(crops, cfg, chip, cfg.v_thresh, cfg.temperature)
        blocks = e.samples // 64
        return [
            size, blocks, e.samples, e.conversions, e.adc_energy, e.baseline_energy,
            e.baseline_energy / e.samples, e.ratio,
        ]

    def noise_point(kelvin):
        e, p, _ = _encode_stats(frames, cfg, chip, cfg.v_thresh, kelvin)
        return [kelvin, input_referred_noise(chip, kelvin) * 1e6, e.significant_fraction, p]

    point = {"thresh": thresh_point, "framesize": framesize_point, "noise": noise_point}[kind]
    return parallel_map(point, values)


def cmd_sweep(args):
    from .plot import plot_csv

    cfg = _load_config(args)
    values = args.values or SWEEP_DEFAULTS[args.kind]
    if any(v < 0 for v in values):
        raise ConfigError("sweep values must be >= 0")
    if args.kind != "thresh" and any(v <= 0 for v in values):
        raise ConfigError(f"{args.kind} sweep values must be > 0")
    frames = _images(args, ACCEPTANCE_SET)
    rows = sweep_rows(args.kind, values, frames, cfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"sweep_{args.kind}.csv"
    cols = SWEEP_COLUMNS[args.kind]
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])
    svg_path = out_dir / f"sweep_{args.kind}.svg"
    x, ys, logx = {
        "thresh": ("thresh_mv", ["significant_fraction"], False),
        "framesize": ("size", ["adc_energy_j", "baseline_energy_j"], True),
        "noise": ("temperature_k", ["psnr_db"], True),
    }[args.kind]
    plot_csv(csv_path, svg_path, x, ys, title=f"{args.kind} sweep", logx=logx)
    _manifest(args, cfg, [n for n, _ in frames], [csv_path, svg_path]).write(
        out_dir / f"sweep_{args.kind}.manifest.json"
    )
    print(f"wrote {csv_path} and {svg_path}")
    for row in rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="noise seed (overrides the config)")


def _add_chip(p):
    p.add_argument("--mismatch-sigma", type=float, help="relative capacitor mismatch")
    p.add_argument("--mismatch-seed", type=int, help="seed of the mismatch draw")
    p.add_argument("--parasitic-ff", type=float, help="parasitic capacitance per node (fF)")
    p.add_argument("--no-noise", action="store_true", help="disable kT/C noise")


def build_parser():
    parser = _Parser(prog="dajc", description="Analog-domain JPEG encoder simulator")
    parser.add_argument("--version", action="version", version=f"dajc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="compress a PGM image into a .dajc stream")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--thresh-mv", type=float, help="significance threshold (mV)")
    p.add_argument("--calib", help="calibration file the decoder will use")
    _add_common(p)
    _add_chip(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .dajc stream into a PGM image")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--calib", help="calibration file (inverse table)")
    p.add_argument("--ref", help="reference PGM for PSNR/SSIM")
    p.add_argument("--csv", help="append a quality row to this CSV")
    p.add_argument("--config", help="JSON run configuration (ADC and gains)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("calibrate", help="characterize a simulated chip and write its calibration")
    p.add_argument("-o", "--output", default="calibration.json")
    p.add_argument("-N", dest="n", type=int, default=16, help="noise averaging per impulse frame")
    p.add_argument("--thresh-mv", type=float, help="threshold for the PSNR report (default 0)")
    p.add_argument("--report", help="before/after CSV (default: next to the output)")
    p.add_argument("--images", nargs="+", help="PGM images (default: bundled corpus)")
    _add_common(p)
    _add_chip(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="parameter sweep with CSV and SVG output")
    p.add_argument("--kind", required=True, choices=sorted(SWEEP_DEFAULTS))
    p.add_argument("--values", type=float, nargs="+", help="sweep points")
    p.add_argument("--images", nargs="+", help="PGM images (default: bundled corpus)")
    p.add_argument("--out-dir", default="sweep_out")
    _add_common(p)
    _add_chip(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "n", 1) < 1:
            parser.error("-N must be >= 1")
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"dajc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"dajc: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"dajc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
