"""
Auto-calibration of the decoder's inverse quantization table.

Sixty-four impulse frames (one pixel at 255, the rest at 0) are pushed
through the pipeline. Each frame excites every DCT coefficient with a known
ideal value, so a per-coefficient least-squares fit gives the effective gain
g_ij (output volts per unit of pre-quantization coefficient). The decoder then
multiplies by 1/g_ij instead of the nominal table.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adc_rle import AdcConfig, adc_convert_array
from .errors import CalibrationError, FormatError
from .jpeg_core import INVERSE_ZIGZAG, dct2, psnr
from .nonideal import MismatchModel, ParasiticModel, apply_parasitics, perturb_caps
from .sc_sim import PipelineConfig, run_blocks
from .stream import decode_frame, encode_frame

CALIB_FORMAT = "dajc-calibration"
CALIB_VERSION = 1


def impulse_frame(p):
    """Pixel block with pixel ``p`` (row-major) at 255 and all others at 0."""
    if not 0 <= p < 64:
        raise IndexError(f"impulse index must be in [0, 63], got {p}")
    x = np.zeros((8, 8), dtype=np.uint8)
    x.flat[p] = 255
    return x


def impulse_frames():
    return np.stack([impulse_frame(p) for p in range(64)])


class Pipeline:
    """
    Callable wrapper around :func:`run_blocks` for a fixed (possibly
    mismatched) configuration. Each call continues with fresh noise streams,
    so repeated measurements are independent but reproducible from ``seed``.
    With ``adc_cfg`` the outputs are read back through the ADC codes.
    """

    def __init__(self, cfg, *, seed=0, noise=True, temperature=300.0, adc_cfg=None):
        self.cfg = cfg
        self.seed = seed
        self.noise = noise
        self.temperature = temperature
        self.adc_cfg = adc_cfg
        self._next_stream = 0

    @property
    def v_mid(self):
        return self.cfg.v_out_mid

    def __call__(self, blocks):
        blocks = np.asarray(blocks)
        out = run_blocks(
            blocks, self.cfg, seed=self.seed, first_stream=self._next_stream,
            noise=self.noise, temperature=self.temperature,
        )
        self._next_stream += len(blocks)
        if self.adc_cfg is not None:
            out = self.adc_cfg.code_to_voltage(adc_convert_array(out, self.adc_cfg))
        return out


def make_pipeline(cfg=None, *, mismatch=None, parasitics=None, **kwargs):
    """Nominal config, optionally perturbed, wrapped as a :class:`Pipeline`."""
    cfg = cfg or PipelineConfig.nominal()
    if mismatch is not None:
        cfg = perturb_caps(cfg, mismatch)
    if parasitics is not None:
        cfg = apply_parasitics(cfg, parasitics)
    return Pipeline(cfg, **kwargs)


@dataclass(frozen=True)
class GainMatrix:
    g: np.ndarray  # (8, 8) output volts per unit coefficient
    residual: float = 0.0  # RMS misfit of the diagonal model, relative to RMS output

    def __post_init__(self):
        g = np.array(self.g, dtype=np.float64)
        if g.shape != (8, 8):
            raise ValueError("gain matrix must be 8x8")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class InverseQTable:
    q_inv: np.ndarray

    def __post_init__(self):
        q = np.array(self.q_inv, dtype=np.float64)
        if q.shape != (8, 8) or not np.all(np.isfinite(q)) or np.any(q == 0):
            raise ValueError("inverse table must be 8x8, finite and nonzero")
        object.__setattr__(self, "q_inv", q)


def characterize(pipeline, noise_averaging=16):
    """
    Estimate the per-coefficient gain of ``pipeline``.

    ``pipeline`` maps pixel blocks (K, 8, 8) to zig-zag output volts (K, 64)
    and exposes ``v_mid``. Every impulse frame is measured
    ``noise_averaging`` times and averaged.
    """
    n = int(noise_averaging)
    if n < 1:
        raise ValueError("noise_averaging must be >= 1")
    frames = impulse_frames()
    raw = np.asarray(pipeline(np.repeat(frames, n, axis=0)), dtype=np.float64)
    out = raw.reshape(64, n, 64).mean(axis=1) - pipeline.v_mid
    obs = out[:, INVERSE_ZIGZAG].reshape(64, 8, 8)
    ideal = dct2(frames)
    g = np.sum(obs * ideal, axis=0) / np.sum(ideal**2, axis=0)

    scale = np.max(np.abs(obs))
    if not np.isfinite(scale) or scale < 1e-12:
        raise CalibrationError("pipeline output is identically zero")
    if not np.all(np.isfinite(g)) or np.any(np.abs(g) <= 1e-9 * np.max(np.abs(g))):
        raise CalibrationError("a coefficient has no measurable gain")
    misfit = obs - g * ideal
    residual = float(np.sqrt(np.sum(misfit**2) / np.sum(obs**2)))
    return GainMatrix(g=g, residual=residual)


def build_inverse_q(g):
    """Decoder table mapping output volts back to pre-quantization coefficients."""
    gm = g.g if isinstance(g, GainMatrix) else np.asarray(g, dtype=np.float64)
    return InverseQTable(q_inv=1.0 / gm)


def ideal_inverse_q(cfg=None):
    """Inverse table of an ideal chain (what an uncalibrated decoder uses)."""
    cfg = cfg or PipelineConfig.nominal()
    return InverseQTable(q_inv=1.0 / cfg.coefficient_gain())


# ---------------------------------------------------------------------------
# Calibration file
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    gains: GainMatrix
    meta: dict = field(default_factory=dict)

    @property
    def q_inv(self):
        return build_inverse_q(self.gains).q_inv


def save_calibration(path, gains, **meta):
    doc = {
        "format": CALIB_FORMAT,
        "version": CALIB_VERSION,
        "gains": [float(v) for v in gains.g.ravel()],
        "residual": gains.residual,
        "meta": meta,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_calibration(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"calibration file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CALIB_FORMAT:
        raise FormatError("not a calibration file")
    if doc.get("version") != CALIB_VERSION:
        raise FormatError(f"unsupported calibration version {doc.get('version')}")
    gains = doc.get("gains")
    if not isinstance(gains, list) or len(gains) != 64:
        raise FormatError("calibration file needs 64 gain values")
    try:
        g = np.array(gains, dtype=np.float64).reshape(8, 8)
    except (TypeError, ValueError):
        raise FormatError("calibration gains must be numbers") from None
    if not np.all(np.isfinite(g)) or np.any(g == 0):
        raise FormatError("calibration gains must be finite and nonzero")
    return Calibration(GainMatrix(g, float(doc.get("residual", 0.0))), dict(doc.get("meta", {})))


# ---------------------------------------------------------------------------
# Before/after evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UpliftResult:
    name: str
    psnr_ideal: float
    psnr_calibrated: float

    @property
    def uplift(self):
        return self.psnr_calibrated - self.psnr_ideal


def evaluate_uplift(frames, chip, q_inv, *, v_thresh=0.0, seed=0, noise=True, adc_cfg=None):
    """
    Encode each named frame on ``chip`` and decode it twice: with the
    nominal inverse table from the header and with ``q_inv``.
    ``frames`` is a sequence of (name, Frame).
    """
    results = []
    for name, frame in frames:
        enc = encode_frame(frame, chip, adc_cfg, v_thresh=v_thresh, seed=seed, noise=noise)
        plain = decode_frame(enc.data, None, adc_cfg)
        fixed = decode_frame(enc.data, q_inv, adc_cfg)
        results.append(
            UpliftResult(name, psnr(frame.pixels, plain.pixels), psnr(frame.pixels, fixed.pixels))
        )
    return results


def calibrate_chip(chip, *, seed=0, noise_averaging=16, noise=True, temperature=300.0):
    """Characterize ``chip`` and return its gain matrix and inverse table."""
    pipe = Pipeline(chip, seed=seed, noise=noise, temperature=temperature)
    gains = characterize(pipe, noise_averaging)
    return gains, build_inverse_q(gains)


def mismatched_chip(sigma=0.05, c_par=1.0, seed=0, cfg=None):
    cfg = cfg or PipelineConfig.nominal()
    cfg = perturb_caps(cfg, MismatchModel(sigma, seed))
    return apply_parasitics(cfg, ParasiticModel(c_par))


__all__ = [
    "AdcConfig", "Calibration", "GainMatrix", "InverseQTable", "Pipeline", "UpliftResult",
    "build_inverse_q", "calibrate_chip", "characterize", "evaluate_uplift", "ideal_inverse_q",
    "impulse_frame", "impulse_frames", "load_calibration", "make_pipeline", "mismatched_chip",
    "save_calibration",
]
