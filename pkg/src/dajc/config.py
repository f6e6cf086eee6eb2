"""
Run configuration shared by the command-line tools.

The JSON file is a flat object; every key is optional and unknown keys are
rejected. Keys and defaults:

    v_min, v_max            input rails (V)                     0.1, 0.9
    thresh_mv               significance threshold (mV)         28
    seed                    frame noise seed                    0
    noise                   kT/C noise on                       true
    temperature             kelvin                              300
    c_norm, c_acc, c_hold   capacitors (fF)                     204, 500, 250
    intentional_attenuation stage transfer ratio                0.5
    c_q_out                 divider output capacitor (fF)       90
    buf1_gain, buf3_gain    buffer gains                        2, 3
    gain_error              relative buffer gain error          0
    mismatch_sigma          relative capacitor mismatch         0
    mismatch_seed           seed of the mismatch draw           0
    parasitic_ff            parasitic added per node (fF)       0
    adc_lo, adc_hi          ADC full scale (V)                  0, 1.6
    adc_cycles              cycles per conversion               14
    adc_energy_per_cycle    J                                   98.5e-6 / 84e6
    adc_comparator_energy   J per classification                0
"""

import json
from dataclasses import asdict, dataclass, fields

from .adc_rle import AdcConfig
from .errors import ConfigError
from .nonideal import MismatchModel, ParasiticModel, apply_parasitics, perturb_caps
from .sc_sim import PipelineConfig


@dataclass(frozen=True)
class RunConfig:
    v_min: float = 0.1
    v_max: float = 0.9
    thresh_mv: float = 28.0
    seed: int = 0
    noise: bool = True
    temperature: float = 300.0
    c_norm: float = 204.0
    c_acc: float = 500.0
    c_hold: float = 250.0
    intentional_attenuation: float = 0.5
    c_q_out: float = 90.0
    buf1_gain: float = 2.0
    buf3_gain: float = 3.0
    gain_error: float = 0.0
    mismatch_sigma: float = 0.0
    mismatch_seed: int = 0
    parasitic_ff: float = 0.0
    adc_lo: float = 0.0
    adc_hi: float = 1.6
    adc_cycles: int = 14
    adc_energy_per_cycle: float = 98.5e-6 / 84e6
    adc_comparator_energy: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("bool", bool):
                ok = isinstance(value, bool)
            elif f.type in ("int", int):
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not ok:
                raise ConfigError(f"config key {f.name!r} has the wrong type: {value!r}")
        if self.thresh_mv < 0 or self.temperature <= 0:
            raise ConfigError("thresh_mv must be >= 0 and temperature > 0")
        if self.mismatch_sigma < 0 or self.parasitic_ff < 0:
            raise ConfigError("mismatch_sigma and parasitic_ff must be >= 0")
        if self.seed < 0 or self.mismatch_seed < 0:
            raise ConfigError("seeds must be >= 0")
        # build once so bad electrical values fail fast
        try:
            self.adc()
            self.nominal()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return RunConfig.from_dict({**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)

    @property
    def v_thresh(self):
        return self.thresh_mv / 1000.0

    def adc(self):
        return AdcConfig(
            v_fullscale_lo=self.adc_lo,
            v_fullscale_hi=self.adc_hi,
            cycles_per_conversion=self.adc_cycles,
            energy_per_cycle=self.adc_energy_per_cycle,
            comparator_energy=self.adc_comparator_energy,
        )

    def nominal(self):
        return PipelineConfig.nominal(
            c_norm=self.c_norm,
            c_acc=self.c_acc,
            c_hold=self.c_hold,
            intentional_attenuation=self.intentional_attenuation,
            c_q_out=self.c_q_out,
            buf1_gain=self.buf1_gain,
            buf3_gain=self.buf3_gain,
            gain_error=self.gain_error,
            v_min=self.v_min,
            v_max=self.v_max,
            v_out_mid=self.adc().v_mid,
        )

    def chip(self):
        """The simulated device: nominal design plus mismatch and parasitics."""
        cfg = perturb_caps(self.nominal(), MismatchModel(self.mismatch_sigma, self.mismatch_seed))
        return apply_parasitics(cfg, ParasiticModel(self.parasitic_ff))
