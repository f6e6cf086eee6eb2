"""
Behavioral, cycle-accounted model of the switched-capacitor JPEG encoder.

Signal flow for one 8x8 block (all voltages are differential, i.e. measured
from the voltage of pixel 128, until the single-ended output stage):

    column-serial pixels -> stage-1 MAC slices (9 cycles/column)
      -> 2x buffer -> charge-sharing transfer (0.5) -> stage-2 MAC slices
      -> two-step capacitive division by Q -> 64:1 mux (zig-zag) -> 3x buffer

A MAC slice samples one input per cycle onto a capacitor sized
``|A[i][k]| * c_norm``; the accumulation cycle then combines the signed slice
charges so the output is ``sum_k sign(A[i][k]) * c_mul[i][k] / c_norm * v_k``.
``c_norm`` is the normalization of the accumulation network; the accumulator
capacitor ``c_acc`` only adds its own reset noise.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .adc_rle import AdcConfig
from .jpeg_core import DCT_BASIS, Q50, ZIGZAG, check_pixel_block
from .nonideal import NoiseContext, batch_standard_normals, ktc_std

_SIGN = np.sign(DCT_BASIS)


@dataclass(frozen=True)
class PhaseSchedule:
    cycles_per_column: int = 9  # 8 sampling + 1 accumulation
    columns: int = 8

    @property
    def total_block_cycles(self):
        return self.cycles_per_column * self.columns


@dataclass
class CapNode:
    capacitance: float  # fF
    voltage: float = 0.0

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ValueError("capacitance must be positive")
        if not np.isfinite(self.voltage):
            raise ValueError("voltage must be finite")

    @property
    def charge(self):
        return self.capacitance * self.voltage


def share_voltages(caps, volts):
    """Charge-sharing voltage of capacitors (last axis) connected together."""
    caps = np.asarray(caps, dtype=np.float64)
    volts = np.asarray(volts, dtype=np.float64)
    return np.sum(caps * volts, axis=-1) / np.sum(caps, axis=-1)


def share(nodes):
    """Connect ``nodes`` in parallel; every node ends at the shared voltage."""
    if len(nodes) < 2:
        raise ValueError("charge sharing needs at least two nodes")
    v = float(share_voltages([n.capacitance for n in nodes], [n.voltage for n in nodes]))
    for n in nodes:
        n.voltage = v
    return v


def buffer(v, gain, gain_error=0.0):
    return v * gain * (1.0 + gain_error)


def two_step_divide(v, c_a, c_inter, c_q):
    """
    Divide ``v`` (held on ``c_a``) by sharing onto a reset ``c_inter`` and then
    sharing ``c_inter`` onto a reset ``c_q``.
    """
    a = CapNode(c_a, v)
    inter = CapNode(c_inter, 0.0)
    share([a, inter])
    q = CapNode(c_q, 0.0)
    return share([inter, q])


def synthesize_divider(q, c_q_out=90.0):
    """
    Capacitors ``(c_a, c_inter)`` realizing a division by ``q`` with the
    output capacitor fixed at ``c_q_out``.

    The ratios r1 = c_a/(c_a+c_inter), r2 = c_inter/(c_inter+c_q) satisfy
    r1*r2 = 1/q; total capacitance is minimized at r2 = 2/(q+1), a unique
    optimum. Works element-wise on arrays.
    """
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 1):
        raise ValueError("divider synthesis needs q > 1")
    c_inter = 2.0 * c_q_out / (q - 1.0)
    c_a = 2.0 * c_q_out * (q + 1.0) / (q - 1.0) ** 2
    return c_a, c_inter


def _default_adc_mid():
    return AdcConfig().v_mid


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    """
    Every capacitor (fF), gain and rail of the analog model.

    Capacitor arrays are per physical device, so mismatch can be applied
    independently: ``c_mul[i, k]`` stage-1 slice caps, ``c_mul2[i, j, m]``
    stage-2 caps for output (i, j) and input column m, ``c_acc[i]`` and
    ``c_acc2[i, j]`` accumulators, ``c_hold[i]``/``c_load[i]`` the transfer
    pair between stages, and ``c_q_first``/``c_inter``/``c_q`` the divider.
    Build the nominal design with :meth:`nominal`.
    """

    c_mul: np.ndarray
    c_mul2: np.ndarray
    c_acc: np.ndarray
    c_acc2: np.ndarray
    c_hold: np.ndarray
    c_load: np.ndarray
    c_q_first: np.ndarray
    c_inter: np.ndarray
    c_q: np.ndarray
    c_norm: float = 204.0
    buf1_gain: float = 2.0
    buf3_gain: float = 3.0
    gain_error: float = 0.0
    v_min: float = 0.1
    v_max: float = 0.9
    v_out_mid: float = field(default_factory=_default_adc_mid)
    differential: bool = True
    schedule: PhaseSchedule = PhaseSchedule()
    div_cycles_per_coeff: int = 2
    mux_cycles_per_sample: int = 1

    SWITCHED_CAPS = (
        "c_mul", "c_mul2", "c_acc", "c_acc2", "c_hold", "c_load",
        "c_q_first", "c_inter", "c_q",
    )
    _SHAPES = {
        "c_mul": (8, 8), "c_mul2": (8, 8, 8), "c_acc": (8,), "c_acc2": (8, 8),
        "c_hold": (8,), "c_load": (8,), "c_q_first": (8, 8), "c_inter": (8, 8),
        "c_q": (8, 8),
    }

    def __post_init__(self):
        for name, shape in self._SHAPES.items():
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(arr > 0):
                raise ValueError(f"{name}: capacitances must be positive")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.c_norm > 0:
            raise ValueError("c_norm must be positive")
        if not (self.buf1_gain > 0 and self.buf3_gain > 0):
            raise ValueError("buffer gains must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")

    @classmethod
    def nominal(
        cls,
        *,
        c_norm=204.0,
        c_acc=500.0,
        c_hold=250.0,
        intentional_attenuation=0.5,
        c_q_out=90.0,
        q=Q50,
        **kwargs,
    ):
        """The ideal design: capacitors sized exactly by the sizing rules."""
        if not 0 < intentional_attenuation < 1:
            raise ValueError("intentional_attenuation must lie in (0, 1)")
        mag = np.abs(DCT_BASIS)
        c_a, c_inter = synthesize_divider(q, c_q_out)
        c_load = c_hold * (1.0 / intentional_attenuation - 1.0)
        return cls(
            c_mul=mag * c_norm,
            c_mul2=np.broadcast_to(mag * c_norm, (8, 8, 8)),
            c_acc=np.full(8, c_acc),
            c_acc2=np.full((8, 8), c_acc),
            c_hold=np.full(8, c_hold),
            c_load=np.full(8, c_load),
            c_q_first=c_a,
            c_inter=c_inter,
            c_q=np.full((8, 8), c_q_out),
            c_norm=c_norm,
            **kwargs,
        )

    def __eq__(self, other):
        if not isinstance(other, PipelineConfig):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )

    __hash__ = None

    # -- derived quantities -------------------------------------------------

    @property
    def pixel_scale(self):
        """Volts per pixel code of the input mapping."""
        return (self.v_max - self.v_min) / 255.0

    @property
    def intentional_attenuation(self):
        return self.c_hold / (self.c_hold + self.c_load)

    @property
    def block_cycles(self):
        per_coeff = self.div_cycles_per_coeff + self.mux_cycles_per_sample
        return self.schedule.total_block_cycles + 64 * per_coeff

    @property
    def noise_events(self):
        """Sampling events per block; each costs 2 draws when differential."""
        stage1 = 8 * (64 + 8)
        transfer = 8 * 8 * 2
        stage2 = 512 + 64
        quant = 64 * 3
        return stage1 + transfer + stage2 + quant

    @property
    def draws_per_block(self):
        return self.noise_events * (2 if self.differential else 1)

    def stage1_matrix(self):
        """Signed effective stage-1 coefficients [i, k]."""
        return _SIGN * self.c_mul / self.c_norm

    def stage2_tensor(self):
        """Signed effective stage-2 coefficients [i, j, m]."""
        return _SIGN[None, :, :] * self.c_mul2 / self.c_norm

    def divider_ratio(self):
        ca, ci, cq = self.c_q_first, self.c_inter, self.c_q
        return ca / (ca + ci) * ci / (ci + cq)

    def operator(self):
        """
        Noise-free linear map (64x64) from differential input volts (row-major
        8x8) to output volts above ``v_out_mid`` (natural coefficient order).
        """
        b1 = self.buf1_gain * (1 + self.gain_error)
        b3 = self.buf3_gain * (1 + self.gain_error)
        scale = b3 * self.divider_ratio() * (b1 * self.intentional_attenuation)[:, None]
        t = np.einsum("ij,ijm,ik->ijkm", scale, self.stage2_tensor(), self.stage1_matrix())
        return t.reshape(64, 64)

    def volt_gain(self):
        """
        Effective gain of each coefficient: output volts per volt of the
        matching orthonormal DCT coefficient of the differential input.
        Cross-coefficient leakage caused by mismatch is not included.
        """
        b1 = self.buf1_gain * (1 + self.gain_error)
        b3 = self.buf3_gain * (1 + self.gain_error)
        row = np.sum(self.stage1_matrix() * DCT_BASIS, axis=1)  # [i]
        col = np.sum(self.stage2_tensor() * DCT_BASIS[None, :, :], axis=2)  # [i, j]
        att = self.intentional_attenuation
        return b3 * self.divider_ratio() * (b1 * att * row)[:, None] * col

    def coefficient_gain(self):
        """Output volts per unit of the pre-quantization coefficient Y (pixel units)."""
        return self.volt_gain() * self.pixel_scale

    def chain_gain(self, q=Q50):
        """Output volts per unit of the quantized coefficient Y/q."""
        return self.coefficient_gain() * np.asarray(q, dtype=np.float64)

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, PhaseSchedule):
                value = {"cycles_per_column": value.cycles_per_column, "columns": value.columns}
            out[f.name] = value
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Noise plumbing
# ---------------------------------------------------------------------------

class _Draws:
    """Hands out kT/C event noise from a (blocks, draws) array in order."""

    def __init__(self, z, differential, temperature):
        self.z = z
        self.differential = differential
        self.temperature = temperature
        self.pos = 0

    def take(self, shape):
        n_events = int(np.prod(shape))
        width = 2 * n_events if self.differential else n_events
        chunk = self.z[:, self.pos : self.pos + width]
        if chunk.shape[1] != width:
            raise RuntimeError("noise draws exhausted")
        self.pos += width
        if self.differential:
            chunk = chunk[:, 0::2] - chunk[:, 1::2]
        return chunk.reshape((self.z.shape[0],) + tuple(shape))

    def ktc(self, shape, c_ff):
        return self.take(shape) * ktc_std(c_ff, self.temperature)


def _draws_from_context(noise, cfg, n_events):
    if noise is None or not noise.enabled:
        return None
    per = 2 if cfg.differential else 1
    z = noise.standard_normals(n_events * per)[None, :]
    return _Draws(z, cfg.differential, noise.temperature)


# ---------------------------------------------------------------------------
# Stages (vectorized over a leading block axis)
# ---------------------------------------------------------------------------

def _stage1_column(col, cfg, draws):
    """col: (N, 8) inputs in serial order; returns (N, 8) row outputs."""
    m1 = cfg.stage1_matrix()
    # einsum rather than BLAS keeps each block's result independent of batch size
    out = np.einsum("ik,nk->ni", m1, col)
    if draws is not None:
        # cycle k samples input k onto slice cap c_mul[i, k] of every row i
        samp = draws.ktc((8, 8), cfg.c_mul.T)  # [n, k, i]
        out = out + np.einsum("ik,nki->ni", m1, samp)
        out = out + draws.ktc((8,), cfg.c_acc)
    return out


def _stage1(xd, cfg, draws):
    z = np.empty_like(xd)
    for m in range(cfg.schedule.columns):
        z[:, :, m] = _stage1_column(xd[:, :, m], cfg, draws)
    return z


def _transfer(z, cfg, draws):
    """Buffer the stage-1 outputs and share them onto the stage-2 input."""
    v = buffer(z, cfg.buf1_gain, cfg.gain_error)
    ch = cfg.c_hold[None, :, None]
    cl = cfg.c_load[None, :, None]
    if draws is None:
        return v * ch / (ch + cl)
    noise = draws.ktc((8, 8, 2), np.stack([cfg.c_hold, cfg.c_load], axis=-1)[None, :, :])
    noise = noise.transpose(0, 2, 1, 3)  # [n, i, m, hold/load]
    held = v + noise[..., 0]
    return (ch * held + cl * noise[..., 1]) / (ch + cl)


def _stage2(zp, cfg, draws):
    m2 = cfg.stage2_tensor()
    y = np.einsum("ijm,nim->nij", m2, zp)
    if draws is not None:
        samp = draws.ktc((8, 8, 8), cfg.c_mul2.transpose(2, 0, 1))  # [n, m, i, j]
        y = y + np.einsum("ijm,nmij->nij", m2, samp)
        y = y + draws.ktc((8, 8), cfg.c_acc2)
    return y


def _divide(y, cfg, draws):
    ca, ci, cq = cfg.c_q_first, cfg.c_inter, cfg.c_q
    if draws is None:
        return y * (ca / (ca + ci)) * (ci / (ci + cq))
    noise = draws.ktc((8, 8, 3), np.stack([ca, ci, cq], axis=-1))
    v0 = y + noise[..., 0]
    v1 = share_voltages(np.stack([ca, ci], -1), np.stack([v0, noise[..., 1]], -1))
    return share_voltages(np.stack([ci, cq], -1), np.stack([v1, noise[..., 2]], -1))


def _simulate(xd, cfg, draws):
    """Differential input (N, 8, 8) -> output volts above mid (N, 8, 8)."""
    z = _stage1(xd, cfg, draws)
    zp = _transfer(z, cfg, draws)
    y = _stage2(zp, cfg, draws)
    yq = _divide(y, cfg, draws)
    return buffer(yq, cfg.buf3_gain, cfg.gain_error)


def simulate_levelshifted(xd, cfg):
    """
    Noise-free chain on differential input volts, shape (..., 8, 8).
    Returns the quantizer outputs above ``v_out_mid`` in natural order.
    """
    xd = np.asarray(xd, dtype=np.float64)
    flat = xd.reshape((-1, 8, 8))
    return _simulate(flat, cfg, None).reshape(xd.shape)


# ---------------------------------------------------------------------------
# Public single-block API
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalogBlockResult:
    samples: np.ndarray  # 64 single-ended volts, zig-zag order
    cycles_used: int
    noise_draws: int

    def __eq__(self, other):
        if not isinstance(other, AnalogBlockResult):
            return NotImplemented
        return (
            np.array_equal(self.samples, other.samples)
            and self.cycles_used == other.cycles_used
            and self.noise_draws == other.noise_draws
        )

    __hash__ = None


def stage1_dct_column(col, cfg, noise=None):
    """One stage-1 pass over an 8-sample column; returns (outputs, cycles)."""
    col = np.asarray(col, dtype=np.float64).reshape(1, 8)
    draws = _draws_from_context(noise, cfg, 64 + 8)
    return _stage1_column(col, cfg, draws)[0], cfg.schedule.cycles_per_column


def transfer(z, cfg, noise=None):
    z = np.asarray(z, dtype=np.float64).reshape(1, 8, 8)
    return _transfer(z, cfg, _draws_from_context(noise, cfg, 128))[0]


def stage2_dct(rows, cfg, noise=None):
    """Stage-2 MAC on the (already buffered and attenuated) stage-1 outputs."""
    rows = np.asarray(rows, dtype=np.float64).reshape(1, 8, 8)
    return _stage2(rows, cfg, _draws_from_context(noise, cfg, 512 + 64))[0]


def input_voltages(x, cfg):
    """Differential input volts (pixel voltage minus the pixel-128 voltage)."""
    return (check_pixel_block(x) - 128.0) * cfg.pixel_scale


def run_block(x, cfg, noise=None):
    """Simulate one pixel block through the full analog chain."""
    xd = input_voltages(x, cfg).reshape(1, 8, 8)
    draws = _draws_from_context(noise, cfg, cfg.noise_events)
    out = _simulate(xd, cfg, draws)[0]
    samples = cfg.v_out_mid + out.reshape(64)[ZIGZAG]
    n_draws = 0 if draws is None else draws.pos
    return AnalogBlockResult(samples=samples, cycles_used=cfg.block_cycles, noise_draws=n_draws)


def run_blocks(blocks, cfg, *, seed=0, first_stream=0, noise=True, temperature=300.0, chunk=512):
    """
    Simulate a stack of pixel blocks, shape (N, 8, 8).

    Block ``b`` draws its noise from stream ``first_stream + b`` of ``seed``,
    so the result for a block does not depend on how the batch is split.
    Returns zig-zag ordered single-ended samples, shape (N, 64).
    """
    xd = input_voltages(blocks, cfg).reshape(-1, 8, 8)
    out = np.empty((xd.shape[0], 64))
    for start in range(0, xd.shape[0], chunk):
        stop = min(start + chunk, xd.shape[0])
        draws = None
        if noise:
            streams = range(first_stream + start, first_stream + stop)
            z = batch_standard_normals(seed, streams, cfg.draws_per_block)
            draws = _Draws(z, cfg.differential, temperature)
        y = _simulate(xd[start:stop], cfg, draws)
        out[start:stop] = y.reshape(-1, 64)[:, ZIGZAG]
    return cfg.v_out_mid + out


def block_noise_context(seed, block_index, temperature=300.0, enabled=True):
    return NoiseContext(temperature=temperature, enabled=enabled, rng_seed=seed, stream=block_index)
