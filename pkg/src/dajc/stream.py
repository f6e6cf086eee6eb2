"""
Frames, PGM files, block tiling and the DAJC compressed stream.

Stream layout (all integers big-endian)::

    header  16 bytes  "DAJC" | version u8 | width u16 | height u16 |
                      v_min_mv u16 | v_max_mv u16 | v_thresh_mv u16 | flags u8
    tokens  2 bytes each, blocks in raster order
            bit15 = 1: Sample, bits 9..0 hold the 10-bit code
            bit15 = 0: Run, bits 5..0 hold the count (1..63)

Bytes after the last block are ignored.
"""

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adc_rle import AdcConfig, EnergyReport, Run, Sample, adc_convert_array, tokens_from_mask
from .errors import FormatError
from .jpeg_core import INVERSE_ZIGZAG, idct2, round_half_away
from .sc_sim import PipelineConfig, run_blocks

MAGIC = b"DAJC"
VERSION = 1
HEADER = struct.Struct(">4sBHHHHHB")
FLAG_CALIBRATED = 0x01


def pixel_to_voltage(p, v_min=0.1, v_max=0.9):
    if not v_min < v_max:
        raise ValueError("v_min must be below v_max")
    return np.asarray(p, dtype=np.float64) / 255.0 * (v_max - v_min) + v_min


def voltage_to_pixel(v, v_min=0.1, v_max=0.9):
    if not v_min < v_max:
        raise ValueError("v_min must be below v_max")
    p = (np.asarray(v, dtype=np.float64) - v_min) / (v_max - v_min) * 255.0
    return np.clip(round_half_away(p), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Frames and PGM
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Frame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise ValueError(f"pixels shape {px.shape} does not match {self.height}x{self.width}")
        if self.width < 1 or self.height < 1:
            raise ValueError("frame must have positive dimensions")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("pixels must be integers in [0, 255]")
            px = px.astype(np.uint8)
        self.pixels = px

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


_PGM_HEADER = re.compile(rb"\AP5(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)\s")


def parse_pgm(data):
    if data[:2] != b"P5":
        kind = data[:2].decode("ascii", "replace")
        raise FormatError(f"unsupported image format {kind!r}; only binary PGM (P5) is read")
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError("malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"PGM maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError("PGM dimensions must be positive")
    body = data[m.end() : m.end() + width * height]
    if len(body) != width * height:
        raise FormatError(f"PGM data truncated: {len(body)} of {width * height} bytes")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()
    return Frame(width, height, pixels)


def load_pgm(path):
    return parse_pgm(Path(path).read_bytes())


def pgm_bytes(frame):
    return b"P5\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels.tobytes()


def save_pgm(frame, path):
    Path(path).write_bytes(pgm_bytes(frame))


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------

def padded_size(width, height):
    return -(-width // 8) * 8, -(-height // 8) * 8


def tile_blocks(frame):
    """
    Blocks of the edge-replicated frame in raster order, shape (N, 8, 8).
    Each block is fed to the encoder column by column.
    """
    pw, ph = padded_size(frame.width, frame.height)
    px = np.pad(frame.pixels, ((0, ph - frame.height), (0, pw - frame.width)), mode="edge")
    return px.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3).reshape(-1, 8, 8)


def untile(blocks, width, height):
    pw, ph = padded_size(width, height)
    blocks = np.asarray(blocks)
    px = blocks.reshape(ph // 8, pw // 8, 8, 8).transpose(0, 2, 1, 3).reshape(ph, pw)
    return Frame(width, height, px[:height, :width])


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    v_min_mv: int
    v_max_mv: int
    v_thresh_mv: int
    flags: int = 0
    version: int = VERSION

    def __post_init__(self):
        if not self.v_min_mv < self.v_max_mv:
            raise FormatError("header v_min must be below v_max")
        if self.width < 1 or self.height < 1:
            raise FormatError("header dimensions must be positive")

    @property
    def calibrated(self):
        return bool(self.flags & FLAG_CALIBRATED)

    @property
    def n_blocks(self):
        pw, ph = padded_size(self.width, self.height)
        return (pw // 8) * (ph // 8)

    def pack(self):
        return HEADER.pack(
            MAGIC, self.version, self.width, self.height,
            self.v_min_mv, self.v_max_mv, self.v_thresh_mv, self.flags,
        )

    @classmethod
    def unpack(cls, data):
        if len(data) < HEADER.size:
            raise FormatError("stream truncated inside header")
        magic, version, w, h, vmin, vmax, vth, flags = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported stream version {version}")
        return cls(w, h, vmin, vmax, vth, flags, version)


def token_word(token):
    if isinstance(token, Sample):
        return 0x8000 | token.code
    return token.count


def tokens_to_bytes(tokens):
    words = np.array([token_word(t) for t in tokens], dtype=">u2")
    return words.tobytes()


def word_token(word):
    if word & 0x8000:
        if word & 0x7C00:
            raise FormatError(f"reserved bits set in sample token 0x{word:04x}")
        return Sample(word & 0x3FF)
    count = word & 0x3F
    if word & ~0x3F or count == 0:
        raise FormatError(f"invalid run token 0x{word:04x}")
    return Run(count)


def parse_blocks(payload, n_blocks):
    """
    Walk the token words of ``n_blocks`` blocks. Returns the codes and
    significance flags, both (n_blocks, 64), and the number of bytes used.
    """
    words = np.frombuffer(payload[: len(payload) // 2 * 2], dtype=">u2").astype(np.int64)
    codes = np.zeros((n_blocks, 64), dtype=np.int64)
    sig = np.zeros((n_blocks, 64), dtype=bool)
    k = 0
    for b in range(n_blocks):
        pos = 0
        while pos < 64:
            if k >= len(words):
                raise FormatError(f"stream truncated in block {b}")
            t = word_token(int(words[k]))
            k += 1
            if isinstance(t, Sample):
                codes[b, pos] = t.code
                sig[b, pos] = True
                pos += 1
            else:
                pos += t.count
            if pos > 64:
                raise FormatError(f"block {b} tokens cover more than 64 positions")
    return codes, sig, 2 * k


# ---------------------------------------------------------------------------
# Encoder / decoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodeResult:
    data: bytes
    energy: EnergyReport
    tokens: int
    blocks: int
    pixels: int

    @property
    def bits_out(self):
        return 8 * len(self.data)

    @property
    def compression_ratio(self):
        return 8 * self.pixels / self.bits_out


def _mv(v):
    mv = int(round_half_away(v * 1000.0))
    if not 0 <= mv <= 0xFFFF:
        raise ValueError(f"{v} V does not fit the 16-bit millivolt header field")
    return mv


def encode_samples(samples, v_thresh, adc_cfg=None, *, force_dc=True):
    """Token bytes and energy for zig-zag samples of shape (N, 64)."""
    adc_cfg = adc_cfg or AdcConfig()
    samples = np.asarray(samples, dtype=np.float64)
    sig = np.abs(samples - adc_cfg.v_mid) >= v_thresh
    if force_dc:
        sig[:, 0] = True
    codes = adc_convert_array(samples, adc_cfg)
    words = []
    for b in range(samples.shape[0]):
        words.extend(token_word(t) for t in tokens_from_mask(sig[b], codes[b]))
    energy = EnergyReport.for_counts(int(sig.sum()), sig.size, adc_cfg)
    return np.array(words, dtype=">u2").tobytes(), energy, len(words)


def encode_frame(frame, cfg=None, adc_cfg=None, *, v_thresh=0.028, seed=0, noise=True,
                 temperature=300.0, calibrated=False, force_dc=True):
    """
    Tile, simulate every block through the analog chain, classify, convert
    and serialize. Block ``b`` uses noise stream ``b`` of ``seed``.
    """
    adc_cfg = adc_cfg or AdcConfig()
    cfg = cfg or PipelineConfig.nominal(v_out_mid=adc_cfg.v_mid)
    if v_thresh < 0:
        raise ValueError("v_thresh must be >= 0")
    header = StreamHeader(
        frame.width, frame.height, _mv(cfg.v_min), _mv(cfg.v_max), _mv(v_thresh),
        FLAG_CALIBRATED if calibrated else 0,
    )
    blocks = tile_blocks(frame)
    samples = run_blocks(blocks, cfg, seed=seed, noise=noise, temperature=temperature)
    payload, energy, n_tokens = encode_samples(samples, v_thresh, adc_cfg, force_dc=force_dc)
    return EncodeResult(header.pack() + payload, energy, n_tokens, len(blocks), frame.width * frame.height)


def read_stream(data, adc_cfg=None):
    """Parse a stream into its header and zig-zag block voltages (N, 64)."""
    adc_cfg = adc_cfg or AdcConfig()
    header = StreamHeader.unpack(data)
    codes, sig, _ = parse_blocks(data[HEADER.size :], header.n_blocks)
    volts = np.where(sig, adc_cfg.code_to_voltage(codes), adc_cfg.v_mid)
    return header, volts


def nominal_inverse_q(header, adc_cfg=None):
    """Uncalibrated decoder table built from the header rails alone."""
    adc_cfg = adc_cfg or AdcConfig()
    cfg = PipelineConfig.nominal(
        v_min=header.v_min_mv / 1000.0, v_max=header.v_max_mv / 1000.0, v_out_mid=adc_cfg.v_mid
    )
    return 1.0 / cfg.coefficient_gain()


def decode_frame(data, q_inv=None, adc_cfg=None):
    """
    Decode a stream. ``q_inv`` (8x8) maps output volts above the zero code to
    pre-quantization coefficients; the nominal table is used when omitted.
    """
    adc_cfg = adc_cfg or AdcConfig()
    header, volts = read_stream(data, adc_cfg)
    if q_inv is None:
        q_inv = nominal_inverse_q(header, adc_cfg)
    q_inv = np.asarray(q_inv, dtype=np.float64)
    if q_inv.shape != (8, 8):
        raise ValueError("q_inv must be 8x8")
    coeffs = (volts - adc_cfg.v_mid)[:, INVERSE_ZIGZAG].reshape(-1, 8, 8) * q_inv
    pixels = np.clip(round_half_away(idct2(coeffs)), 0, 255).astype(np.uint8)
    return untile(pixels, header.width, header.height)
