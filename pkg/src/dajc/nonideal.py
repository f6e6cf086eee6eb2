"""
Stochastic non-idealities: kT/C sampling noise, capacitor mismatch and
parasitic capacitance, plus the closed-form noise budget of the chain.

Noise draws come from a counter-based generator (Philox4x64-10, keyed by
``(rng_seed, stream)``) followed by a Box-Muller transform that consumes two
64-bit raw outputs per normal and keeps only the cosine branch. Draw ``k`` of
a stream therefore depends on ``(rng_seed, stream, k)`` alone, which lets
blocks of a frame be simulated in any order or in parallel.
"""

from dataclasses import dataclass, replace

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K, exact SI value
FEMTO = 1e-15

_MASK64 = (1 << 64) - 1
_TWO_POW_M53 = 2.0**-53


def ktc_std(c_ff, temperature=300.0):
    """RMS kT/C voltage (V) sampled onto a capacitor of ``c_ff`` femtofarads."""
    return np.sqrt(BOLTZMANN * temperature / (np.asarray(c_ff, dtype=np.float64) * FEMTO))


def _key(seed, stream):
    return np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)


def _raw(seed, stream, start, count):
    """Raw Philox outputs ``start .. start+count-1`` of one keyed stream."""
    bitgen = np.random.Philox(key=_key(seed, stream), counter=start // 4)
    skip = start % 4
    if skip:
        bitgen.random_raw(skip)
    return bitgen.random_raw(count)


def _box_muller(raw):
    raw = raw.reshape(raw.shape[:-1] + (-1, 2))
    u1 = ((raw[..., 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53
    u2 = (raw[..., 1] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def standard_normals_at(seed, stream, start, n):
    """Standard normal draws ``start .. start+n-1`` of stream ``(seed, stream)``."""
    return _box_muller(_raw(seed, stream, 2 * start, 2 * n))


def batch_standard_normals(seed, streams, n):
    """First ``n`` draws of each stream in ``streams``; shape (len(streams), n)."""
    streams = list(streams)
    raw = np.empty((len(streams), 2 * n), dtype=np.uint64)
    for row, stream in enumerate(streams):
        raw[row] = _raw(seed, stream, 0, 2 * n)
    return _box_muller(raw)


@dataclass
class NoiseContext:
    """
    Per-task noise state. ``draw_count`` is the index of the next draw and
    grows by exactly one per standard normal handed out.
    """

    temperature: float = 300.0
    enabled: bool = True
    rng_seed: int = 0
    stream: int = 0
    draw_count: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    def standard_normals(self, n):
        z = standard_normals_at(self.rng_seed, self.stream, self.draw_count, n)
        self.draw_count += n
        return z

    def ktc_std(self, c_ff):
        return ktc_std(c_ff, self.temperature)


def sample_ktc(c_ff, ctx):
    """One kT/C sample (V) on ``c_ff``; exactly 0 when noise is disabled."""
    if not ctx.enabled:
        return 0.0
    return float(ctx.standard_normals(1)[0] * ctx.ktc_std(c_ff))


# ---------------------------------------------------------------------------
# Process variation and parasitics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MismatchModel:
    sigma_rel: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rel < 0:
            raise ValueError("sigma_rel must be >= 0")


@dataclass(frozen=True)
class ParasiticModel:
    c_par_node: float = 0.0  # fF added to every switched node

    def __post_init__(self):
        if self.c_par_node < 0:
            raise ValueError("c_par_node must be >= 0")


def perturb_caps(cfg, m):
    """
    Return a copy of ``cfg`` whose switched capacitors are each scaled by an
    independent (1 + eps), eps ~ N(0, sigma_rel^2). Draws that would make a
    capacitor non-positive are redrawn.
    """
    if m.sigma_rel == 0:
        return cfg
    rng = np.random.Generator(np.random.Philox(key=_key(m.seed, 0x6D69736D)))
    changes = {}
    for name in cfg.SWITCHED_CAPS:
        c = np.asarray(getattr(cfg, name), dtype=np.float64)
        factor = 1.0 + m.sigma_rel * rng.standard_normal(c.shape)
        bad = factor <= 0
        while np.any(bad):
            factor[bad] = 1.0 + m.sigma_rel * rng.standard_normal(int(bad.sum()))
            bad = factor <= 0
        changes[name] = c * factor
    return replace(cfg, **changes)


def apply_parasitics(cfg, p):
    """Add ``p.c_par_node`` to every switched capacitance (not idempotent)."""
    if p.c_par_node == 0:
        return cfg
    changes = {
        name: np.asarray(getattr(cfg, name), dtype=np.float64) + p.c_par_node
        for name in cfg.SWITCHED_CAPS
    }
    return replace(cfg, **changes)


# ---------------------------------------------------------------------------
# Closed-form noise budget
# ---------------------------------------------------------------------------

def _event_var(cfg, c_ff, temperature):
    # a differential sampling event puts independent kT/C on both half circuits
    v = BOLTZMANN * temperature / (np.asarray(c_ff, dtype=np.float64) * FEMTO)
    return 2.0 * v if cfg.differential else v


def stage_noise_variances(cfg, temperature=300.0):
    """
    Output-referred variance contributed by each stage, per coefficient.

    Returns a dict of (8, 8) arrays, all expressed at the ADC input (after the
    output buffer), keyed by ``stage1``, ``transfer``, ``stage2``, ``quantizer``.
    """
    ev = lambda c: _event_var(cfg, c, temperature)  # noqa: E731
    m1 = cfg.stage1_matrix()  # [i, k]
    m2 = cfg.stage2_tensor()  # [i, j, m]
    b1 = cfg.buf1_gain * (1 + cfg.gain_error)
    b3 = cfg.buf3_gain * (1 + cfg.gain_error)
    ch, cl = cfg.c_hold, cfg.c_load
    att = ch / (ch + cl)

    # stage 1 accumulator output, per row i (same for every column)
    var_z1 = np.sum(m1**2 * ev(cfg.c_mul), axis=1) + ev(cfg.c_acc)
    # transfer share onto the stage-2 input
    var_t = (ch**2 * ev(ch) + cl**2 * ev(cl)) / (ch + cl) ** 2
    row_gain = np.sum(m2**2, axis=2)  # [i, j]
    y_s1 = row_gain * ((att * b1) ** 2 * var_z1)[:, None]
    y_t = row_gain * var_t[:, None]
    y_s2 = np.sum(m2**2 * ev(cfg.c_mul2), axis=2) + ev(cfg.c_acc2)

    ca, ci, cq = cfg.c_q_first, cfg.c_inter, cfg.c_q
    r1 = ca / (ca + ci)
    r2 = ci / (ci + cq)
    div = (r1 * r2) ** 2
    q_own = (r2**2) * (r1**2 * ev(ca) + (ci / (ca + ci)) ** 2 * ev(ci)) + (cq / (ci + cq)) ** 2 * ev(cq)
    out = b3**2
    return {
        "stage1": out * div * y_s1,
        "transfer": out * div * y_t,
        "stage2": out * div * y_s2,
        "quantizer": out * q_own,
    }


def output_noise_std(cfg, temperature=300.0):
    """Analytic RMS noise (V) of each output coefficient, natural 8x8 order."""
    parts = stage_noise_variances(cfg, temperature)
    return np.sqrt(sum(parts.values()))


def noise_budget(cfg, temperature=300.0):
    """
    RMS input-referred noise (V) of each stage.

    Output variances are divided by the squared chain gain from the input to
    the output for each coefficient, then averaged over the 64 coefficients.
    Note the quantizer entry is referred through the 1/Q division too, so it
    is reported for information and left out of :func:`input_referred_noise`.
    """
    gain = cfg.volt_gain()
    return {
        stage: float(np.sqrt(np.mean(var / gain**2)))
        for stage, var in stage_noise_variances(cfg, temperature).items()
    }


def input_referred_noise(cfg, temperature=300.0):
    """
    Input-referred kT/C noise (V) of the switched-capacitor MAC front end:
    root-sum-square of the stage-1, transfer and stage-2 terms.
    """
    b = noise_budget(cfg, temperature)
    return float(np.sqrt(b["stage1"] ** 2 + b["transfer"] ** 2 + b["stage2"] ** 2))
