import hashlib
import importlib.util

import numpy as np
import pytest
from conftest import FIXTURES, GOLDEN
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dajc import stream as ds
from dajc.adc_rle import AdcConfig, Run, Sample
from dajc.corpus import ACCEPTANCE_SET, load_corpus
from dajc.errors import FormatError
from dajc.jpeg_core import INVERSE_ZIGZAG, psnr
from dajc.sc_sim import PipelineConfig, run_blocks
from dajc.stream import Frame, StreamHeader

ADC = AdcConfig()


def _golden_cases():
    path = GOLDEN.parents[1] / "tools" / "make_golden.py"
    mod_spec = importlib.util.spec_from_file_location("make_golden", path)
    mod = importlib.util.module_from_spec(mod_spec)
    mod_spec.loader.exec_module(mod)
    return mod.golden_cases()


def random_frame(rng, w, h):
    return Frame.from_array(rng.integers(0, 256, (h, w), dtype=np.uint8))


# -- pixel mapping ----------------------------------------------------------

def test_pixel_voltage_examples():
    assert ds.pixel_to_voltage(0, 0.1, 0.9) == pytest.approx(0.1, abs=1e-15)
    assert ds.pixel_to_voltage(255, 0.1, 0.9) == pytest.approx(0.9, abs=1e-15)
    codes = np.arange(256)
    assert np.array_equal(ds.voltage_to_pixel(ds.pixel_to_voltage(codes)), codes)
    assert ds.voltage_to_pixel(5.0) == 255 and ds.voltage_to_pixel(-5.0) == 0
    with pytest.raises(ValueError):
        ds.pixel_to_voltage(3, 0.9, 0.1)


@given(st.floats(0.0, 1.0), st.floats(0.05, 2.0))
def test_pixel_mapping_round_trip(lo, span):
    codes = np.arange(256)
    v = ds.pixel_to_voltage(codes, lo, lo + span)
    assert np.array_equal(ds.voltage_to_pixel(v, lo, lo + span), codes)


# -- tiling -----------------------------------------------------------------

def test_tiling_examples(rng):
    f = random_frame(rng, 8, 8)
    blocks = ds.tile_blocks(f)
    assert blocks.shape == (1, 8, 8) and np.array_equal(blocks[0], f.pixels)

    f = random_frame(rng, 16, 8)
    blocks = ds.tile_blocks(f)
    assert blocks.shape == (2, 8, 8)
    assert np.array_equal(blocks[0], f.pixels[:, :8]) and np.array_equal(blocks[1], f.pixels[:, 8:])

    f = random_frame(rng, 9, 8)
    blocks = ds.tile_blocks(f)
    assert blocks.shape == (2, 8, 8)
    assert np.all(blocks[1] == f.pixels[:, 8:9])  # last column replicated
    assert ds.untile(blocks, 9, 8) == f


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_untile_inverts_tile(w, h, seed):
    f = random_frame(np.random.default_rng(seed), w, h)
    assert ds.padded_size(w, h)[0] % 8 == 0 and ds.padded_size(w, h)[1] % 8 == 0
    assert ds.untile(ds.tile_blocks(f), w, h) == f


def test_raster_block_order(rng):
    f = random_frame(rng, 24, 16)
    blocks = ds.tile_blocks(f)
    assert np.array_equal(blocks[4], f.pixels[8:16, 8:16])


# -- PGM --------------------------------------------------------------------

def test_pgm_fixture():
    f = ds.load_pgm(FIXTURES / "tiny_2x2.pgm")
    assert (f.width, f.height) == (2, 2)
    assert f.pixels.ravel().tolist() == [0, 128, 255, 64]


def test_pgm_round_trip(tmp_path, rng):
    f = random_frame(rng, 13, 7)
    path = tmp_path / "x.pgm"
    ds.save_pgm(f, path)
    assert ds.load_pgm(path) == f
    raw = (FIXTURES / "tiny_2x2.pgm").read_bytes()
    assert ds.pgm_bytes(ds.parse_pgm(raw)) == raw


def test_pgm_header_comments():
    data = b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02"
    assert ds.parse_pgm(data).pixels.tolist() == [[1, 2]]


@pytest.mark.parametrize(
    "data",
    [
        b"P2\n2 2\n255\n0 128 255 64\n",
        b"P5\n2 2\n65535\n" + bytes(8),
        b"P5\n2 2\n255\n\x00\x01\x02",
        b"P5\n2\n",
        b"GIF89a",
    ],
)
def test_pgm_errors(data):
    with pytest.raises(FormatError):
        ds.parse_pgm(data)


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(4, 4, np.zeros((4, 5), np.uint8))
    with pytest.raises(ValueError):
        Frame.from_array(np.full((2, 2), 300))


# -- wire format ------------------------------------------------------------

def test_header_layout():
    h = StreamHeader(640, 480, 100, 900, 28, ds.FLAG_CALIBRATED)
    raw = h.pack()
    assert len(raw) == 16
    assert raw == b"DAJC\x01\x02\x80\x01\xe0\x00\x64\x03\x84\x00\x1c\x01"
    assert StreamHeader.unpack(raw) == h and h.calibrated
    assert h.n_blocks == 80 * 60


def test_token_words():
    assert ds.tokens_to_bytes([Sample(0x3FF), Run(63), Sample(0), Run(1)]) == bytes.fromhex("83ff003f80000001")
    for word in (0x8400, 0xC000, 0x0040, 0x0000, 0x4001):
        with pytest.raises(FormatError):
            ds.word_token(word)


@pytest.fixture(scope="module")
def small_stream():
    f = Frame.from_array(np.random.default_rng(5).integers(0, 256, (16, 24), dtype=np.uint8))
    return f, ds.encode_frame(f, seed=4)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: b"DAJX" + d[4:],
        lambda d: d[:4] + b"\x02" + d[5:],
        lambda d: d[:10],
        lambda d: d[:-2],
        lambda d: d[:16] + b"\x00\x3f\x00\x3f" + d[16:],  # run sum overflows 64
        lambda d: d[:16] + b"\xff\xff" + d[18:],  # reserved sample bits
        lambda d: d[:16] + b"\x00\x00" + d[18:],  # zero run
        lambda d: d[:9] + b"\x03\x84\x00\x64" + d[13:],  # v_min above v_max
    ],
)
def test_decode_errors(small_stream, mutate):
    _, enc = small_stream
    with pytest.raises(FormatError):
        ds.decode_frame(mutate(enc.data))


def test_trailing_bytes_are_ignored(small_stream):
    _, enc = small_stream
    base = ds.decode_frame(enc.data)
    assert ds.decode_frame(enc.data + b"\x12\x34\x56") == base
    assert ds.decode_frame(enc.data + bytes(100)) == base


def test_size_accounting(small_stream):
    f, enc = small_stream
    assert len(enc.data) == 16 + 2 * enc.tokens
    assert enc.bits_out == 8 * 16 + 16 * enc.tokens
    assert enc.compression_ratio == pytest.approx(8 * f.width * f.height / enc.bits_out)
    assert enc.blocks == 6


# -- encoder / decoder ------------------------------------------------------

def test_deterministic_bytes(small_stream):
    f, enc = small_stream
    assert ds.encode_frame(f, seed=4).data == enc.data
    assert ds.encode_frame(f, seed=5).data != enc.data


@pytest.mark.parametrize("name,frame,kwargs", _golden_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_golden_streams(name, frame, kwargs):
    want = (GOLDEN / f"{name}.dajc").read_bytes()
    sums = dict(reversed(line.split()) for line in (GOLDEN / "SHA256SUMS").read_text().splitlines())
    assert hashlib.sha256(want).hexdigest() == sums[f"{name}.dajc"]
    assert ds.encode_frame(frame, **kwargs).data == want


def test_decode_within_one_lsb(small_stream):
    f, enc = small_stream
    header, volts = ds.read_stream(enc.data)
    samples = run_blocks(ds.tile_blocks(f), PipelineConfig.nominal(), seed=4)
    codes, sig, _ = ds.parse_blocks(enc.data[16:], header.n_blocks)
    clipped = np.clip(samples, ADC.v_fullscale_lo, ADC.v_fullscale_hi)
    assert np.all(np.abs(volts[sig] - clipped[sig]) <= ADC.lsb)
    assert np.all(volts[~sig] == ADC.v_mid)
    assert np.all(sig[:, 0])  # DC is always converted


def adc_floor_psnr(cfg):
    """PSNR when the only error is uniform ADC rounding on every coefficient."""
    q_inv = 1 / cfg.coefficient_gain()
    mse = np.sum((ADC.lsb * q_inv) ** 2 / 12) / 64
    return 10 * np.log10(255**2 / mse)


def test_noise_free_thresh0_round_trip(rng):
    """Without noise and threshold the decode error is the ADC rounding floor."""
    f = Frame.from_array(np.clip(rng.normal(128, 20, (32, 32)), 0, 255).astype(np.uint8))
    enc = ds.encode_frame(f, v_thresh=0.0, noise=False)
    assert enc.energy.significant_fraction == 1.0
    dec = ds.decode_frame(enc.data)
    assert psnr(f.pixels, dec.pixels) == pytest.approx(adc_floor_psnr(PipelineConfig.nominal()), abs=1.0)


def test_header_fields_drive_decoder(small_stream):
    f, _ = small_stream
    cfg = PipelineConfig.nominal(v_min=0.2, v_max=0.7)
    enc = ds.encode_frame(f, cfg, v_thresh=0.0, noise=False)
    header = StreamHeader.unpack(enc.data)
    assert (header.v_min_mv, header.v_max_mv, header.v_thresh_mv) == (200, 700, 0)
    # a decoder that ignored the header rails would be off by a factor 0.8/0.5
    assert psnr(f.pixels, ds.decode_frame(enc.data).pixels) == pytest.approx(adc_floor_psnr(cfg), abs=1.0)


def test_ideal_five_percent_gives_25db():
    (name, frame), = load_corpus(("camera",))
    fractions = {}
    for mv in (20, 24, 28, 32, 40):
        enc = ds.encode_frame(frame, v_thresh=mv / 1000, noise=False)
        fractions[mv] = (enc.energy.significant_fraction, enc)
    mv = min(fractions, key=lambda k: abs(fractions[k][0] - 0.05))
    frac, enc = fractions[mv]
    assert 0.025 <= frac <= 0.075
    assert psnr(frame.pixels, ds.decode_frame(enc.data).pixels) >= 25


def test_mid_gray_tokens():
    f = Frame.from_array(np.full((16, 16), 128, np.uint8))
    enc = ds.encode_frame(f, noise=False)
    header, volts = ds.read_stream(enc.data)
    codes, sig, _ = ds.parse_blocks(enc.data[16:], header.n_blocks)
    assert enc.tokens == 2 * 4
    assert np.all(sig.sum(axis=1) == 1)
    assert ds.decode_frame(enc.data) == f
    without_dc = ds.encode_frame(f, noise=False, force_dc=False)
    assert without_dc.data[16:] == ds.tokens_to_bytes([Run(63), Run(1)] * 4)


@pytest.mark.xfail(
    strict=True,
    reason="the forced DC sample plus one run token is 4 bytes per 64-byte block: 6.25% of raw",
)
def test_mid_gray_under_five_percent():
    f = Frame.from_array(np.full((64, 64), 128, np.uint8))
    enc = ds.encode_frame(f, noise=False)
    assert len(enc.data) - 16 < 0.05 * f.width * f.height


def test_compression_ratio_tracks_significance():
    """With one token per sample or run, the ratio is at most 8/(16 * fraction) per pixel."""
    for name, frame in load_corpus(ACCEPTANCE_SET):
        enc = ds.encode_frame(frame)
        frac = enc.energy.significant_fraction
        assert frac <= 0.05
        assert enc.compression_ratio <= 0.5 / frac
        assert enc.compression_ratio > 5


@pytest.mark.xfail(
    strict=True,
    reason="16-bit tokens at 3-5% significance give ratios of 7-11; most corpus images fall short of 10",
)
def test_compression_ratio_at_least_ten():
    ratios = {name: ds.encode_frame(frame).compression_ratio for name, frame in load_corpus(ACCEPTANCE_SET)}
    assert min(ratios.values()) >= 10, ratios


@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20))), st.integers(0, 60))
def test_any_frame_encodes_and_decodes(px, mv):
    f = Frame.from_array(px)
    enc = ds.encode_frame(f, v_thresh=mv / 1000, seed=1)
    dec = ds.decode_frame(enc.data)
    assert (dec.width, dec.height) == (f.width, f.height)
    _, volts = ds.read_stream(enc.data)
    assert volts.shape == (ds.StreamHeader.unpack(enc.data).n_blocks, 64)
    assert np.all(volts[:, INVERSE_ZIGZAG[0]] != 0)
