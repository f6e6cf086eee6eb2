"""
Sparsity-aware conversion: threshold classification, 10-bit SAR conversion
with cycle and energy accounting, and run-length tokens.
"""

from dataclasses import dataclass
from decimal import Decimal

import numpy as np

BLOCK_POSITIONS = 64
MAX_RUN = 63  # 6-bit run field


@dataclass(frozen=True)
class AdcConfig:
    """
    Ideal mid-tread SAR model. ``inl`` is an optional table of 1024 additive
    errors in LSB, indexed by the ideal code.
    """

    bits: int = 10
    v_fullscale_lo: float = 0.0
    v_fullscale_hi: float = 1.6
    cycles_per_conversion: int = 14
    energy_per_cycle: float = 98.5e-6 / 84e6  # 98.5 uW at 84 MHz
    comparator_energy: float = 0.0
    inl: tuple = None

    def __post_init__(self):
        if self.bits != 10:
            raise ValueError("only 10-bit conversion is modeled")
        if not self.v_fullscale_lo < self.v_fullscale_hi:
            raise ValueError("v_fullscale_lo must be below v_fullscale_hi")
        if self.cycles_per_conversion < 1:
            raise ValueError("cycles_per_conversion must be >= 1")
        if self.energy_per_cycle < 0 or self.comparator_energy < 0:
            raise ValueError("energies must be >= 0")
        if self.inl is not None and len(self.inl) != self.max_code + 1:
            raise ValueError(f"inl table needs {self.max_code + 1} entries")

    @property
    def max_code(self):
        return (1 << self.bits) - 1

    @property
    def lsb(self):
        return (self.v_fullscale_hi - self.v_fullscale_lo) / self.max_code

    @property
    def mid_code(self):
        return 1 << (self.bits - 1)

    @property
    def v_mid(self):
        """Voltage of the zero-coefficient code (512)."""
        return self.code_to_voltage(self.mid_code)

    @property
    def conversion_energy(self):
        return self.cycles_per_conversion * self.energy_per_cycle

    def code_to_voltage(self, code):
        return self.v_fullscale_lo + np.asarray(code, dtype=np.float64) * self.lsb


# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    code: int

    def __post_init__(self):
        if not 0 <= self.code <= 1023:
            raise ValueError(f"sample code out of range: {self.code}")

    @property
    def positions(self):
        return 1


@dataclass(frozen=True)
class Run:
    count: int

    def __post_init__(self):
        if not 1 <= self.count <= MAX_RUN:
            raise ValueError(f"run count must be in [1, {MAX_RUN}], got {self.count}")

    @property
    def positions(self):
        return self.count


def token_positions(tokens):
    return sum(t.positions for t in tokens)


def _runs(n):
    out = []
    while n > 0:
        step = min(n, MAX_RUN)
        out.append(Run(step))
        n -= step
    return out


def tokens_from_mask(significant, codes):
    """Tokens for one block given its 64 significance flags and ADC codes."""
    tokens = []
    gap = 0
    for pos in np.flatnonzero(significant):
        tokens.extend(_runs(pos - gap))
        tokens.append(Sample(int(codes[pos])))
        gap = pos + 1
    tokens.extend(_runs(len(significant) - gap))
    return tokens


# ---------------------------------------------------------------------------
# Energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    conversions: int
    samples: int
    adc_energy: float
    comparator_energy: float
    baseline_energy: float
    adc_cycles: int

    @property
    def significant_fraction(self):
        return self.conversions / self.samples if self.samples else 0.0

    @property
    def actual_energy(self):
        return self.adc_energy + self.comparator_energy

    @property
    def ratio(self):
        return energy_ratio(self)

    def __add__(self, other):
        if not isinstance(other, EnergyReport):
            return NotImplemented
        return EnergyReport(
            conversions=self.conversions + other.conversions,
            samples=self.samples + other.samples,
            adc_energy=self.adc_energy + other.adc_energy,
            comparator_energy=self.comparator_energy + other.comparator_energy,
            baseline_energy=self.baseline_energy + other.baseline_energy,
            adc_cycles=self.adc_cycles + other.adc_cycles,
        )

    @classmethod
    def empty(cls):
        return cls(0, 0, 0.0, 0.0, 0.0, 0)

    @classmethod
    def for_counts(cls, conversions, samples, cfg):
        """Report for ``conversions`` converted out of ``samples`` classified."""
        return cls(
            conversions=int(conversions),
            samples=int(samples),
            adc_energy=conversions * cfg.cycles_per_conversion * cfg.energy_per_cycle,
            comparator_energy=samples * cfg.comparator_energy,
            baseline_energy=samples * cfg.cycles_per_conversion * cfg.energy_per_cycle,
            adc_cycles=int(conversions) * cfg.cycles_per_conversion,
        )


def energy_ratio(report):
    """Baseline (convert everything) energy over the energy actually spent."""
    actual = report.actual_energy
    if actual == 0:
        return float("inf")
    return report.baseline_energy / actual


def comm_power(bit_rate, energy_per_bit):
    """Transmit power (W) = bit rate (bit/s) x energy efficiency (J/bit)."""
    if bit_rate < 0 or energy_per_bit < 0:
        raise ValueError("bit rate and energy per bit must be >= 0")
    # decimal product so e.g. 600e6 * 1e-9 gives exactly 0.6
    return float(Decimal(repr(float(bit_rate))) * Decimal(repr(float(energy_per_bit))))


# ---------------------------------------------------------------------------
# Classification, conversion, block coding
# ---------------------------------------------------------------------------

def classify(v, v_thresh, v_mid=None):
    """Significant iff |v - v_mid| >= v_thresh (closed boundary)."""
    if v_thresh < 0:
        raise ValueError("v_thresh must be >= 0")
    if v_mid is None:
        v_mid = AdcConfig().v_mid
    return np.abs(np.asarray(v, dtype=np.float64) - v_mid) >= v_thresh


def adc_convert_array(v, cfg):
    x = (np.asarray(v, dtype=np.float64) - cfg.v_fullscale_lo) / cfg.lsb
    code = np.clip(np.floor(x + 0.5), 0, cfg.max_code)
    if cfg.inl is not None:
        err = np.asarray(cfg.inl, dtype=np.float64)[code.astype(np.int64)]
        code = np.clip(np.floor(x + err + 0.5), 0, cfg.max_code)
    return code.astype(np.int64)


def adc_convert(v, cfg):
    """10-bit code of one voltage; out-of-range inputs clamp to the end codes."""
    return int(adc_convert_array(v, cfg))


def encode_block(samples, v_thresh, cfg=None, *, v_mid=None, force_dc=False):
    """
    Run-length code 64 zig-zag samples.

    Significant samples become Sample tokens (one conversion each);
    insignificant ones are counted into Run tokens. With ``force_dc`` the
    first sample is always converted.
    """
    cfg = cfg or AdcConfig()
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != (BLOCK_POSITIONS,):
        raise ValueError("encode_block needs exactly 64 samples")
    sig = classify(samples, v_thresh, cfg.v_mid if v_mid is None else v_mid)
    if force_dc:
        sig[0] = True
    codes = adc_convert_array(samples, cfg)
    tokens = tokens_from_mask(sig, codes)
    return tokens, EnergyReport.for_counts(int(sig.sum()), BLOCK_POSITIONS, cfg)


def decode_tokens(tokens, cfg=None, v_mid=None):
    """64 voltages from one block's tokens; runs land exactly on ``v_mid``."""
    cfg = cfg or AdcConfig()
    v_mid = cfg.v_mid if v_mid is None else v_mid
    if token_positions(tokens) != BLOCK_POSITIONS:
        raise ValueError("tokens do not cover exactly 64 positions")
    out = np.full(BLOCK_POSITIONS, v_mid, dtype=np.float64)
    pos = 0
    for t in tokens:
        if isinstance(t, Sample):
            out[pos] = cfg.code_to_voltage(t.code)
        pos += t.positions
    return out
