"""Time-varying channel rate traces: generation and the TRACE file format.

A trace is the sequence of per-transmission-block byte budgets the channel
grants.  Delivery within the granted budget is error free; the simulator
never corrupts bytes (corruption robustness is the frame parser's job).

All stochastic models draw from numpy's PCG64 generator seeded from the
model's ``seed`` field, with a fixed draw protocol per model (documented on
:func:`generate_trace`), so a (model, seed, n) triple reproduces the same
trace on every run and platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    TrailingDataError,
    TruncatedError,
    ValidationError,
)

TRACE_MAGIC = b"RTRC"
TRACE_VERSION = 1
_HEADER = struct.Struct("<4sBI")
_RATE_MAX = 0xFFFFFFFF


@dataclass(frozen=True)
class RateTrace:
    """Non-empty sequence of non-negative per-block byte budgets."""

    rates: tuple[int, ...]

    def __post_init__(self):
        rates = tuple(int(r) for r in self.rates)
        if not rates:
            raise ValidationError("trace must be non-empty")
        if any(r < 0 for r in rates):
            raise ValidationError("rates must be >= 0")
        object.__setattr__(self, "rates", rates)

    def __len__(self):
        return len(self.rates)

    def __getitem__(self, i):
        return self.rates[i]

    def cycled(self, n: int):
        """First n budgets, repeating the trace as needed."""
        return [self.rates[i % len(self.rates)] for i in range(n)]


@dataclass(frozen=True)
class Constant:
    rate: int
    seed: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValidationError("rate must be >= 0")


@dataclass(frozen=True)
class IidUniform:
    lo: int
    hi: int
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ValidationError("need 0 <= lo <= hi")


@dataclass(frozen=True)
class GilbertElliott:
    """Two-state Markov chain: good/bad states with their own byte rates."""

    p_gb: float
    p_bg: float
    r_good: int
    r_bad: int
    seed: int = 0

    def __post_init__(self):
        for p in (self.p_gb, self.p_bg):
            if not 0.0 <= p <= 1.0:
                raise ValidationError("transition probabilities must lie in [0, 1]")
        if self.r_good < 0 or self.r_bad < 0:
            raise ValidationError("rates must be >= 0")


@dataclass(frozen=True)
class RayleighCapacity:
    """Shannon-capacity rate under Rayleigh fading: B*log2(1+snr*g)/8 bytes."""

    bandwidth_symbols: int
    mean_snr: float
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth_symbols <= 0:
            raise ValidationError("bandwidth must be > 0")
        if not self.mean_snr > 0:
            raise ValidationError("mean SNR must be > 0")


ChannelModel = Constant | IidUniform | GilbertElliott | RayleighCapacity


def generate_trace(model: ChannelModel, n_blocks: int) -> RateTrace:
    """Generate a trace of ``n_blocks`` budgets from a channel model.

    Draw protocol (one PCG64 stream seeded with ``model.seed``):

    * ``Constant``: no draws.
    * ``IidUniform``: one integer draw per block, inclusive [lo, hi].
    * ``GilbertElliott``: starts in the good state; each block emits the
      current state's rate, then draws one uniform to decide the transition.
    * ``RayleighCapacity``: one uniform U per block; the fade is the
      inverse-CDF exponential ``g = -ln(1 - U)`` and the rate is
      ``floor(B * log2(1 + snr * g) / 8)``.
    """
    if n_blocks < 1:
        raise ValidationError("need at least one block")
    rng = np.random.default_rng(model.seed)

    if isinstance(model, Constant):
        return RateTrace((model.rate,) * n_blocks)

    if isinstance(model, IidUniform):
        draws = rng.integers(model.lo, model.hi + 1, size=n_blocks)
        return RateTrace(tuple(int(v) for v in draws))

    if isinstance(model, GilbertElliott):
        rates = []
        good = True
        u = rng.random(n_blocks)
        for t in range(n_blocks):
            rates.append(model.r_good if good else model.r_bad)
            if good:
                good = not (u[t] < model.p_gb)
            else:
                good = u[t] < model.p_bg
        return RateTrace(tuple(rates))

    if isinstance(model, RayleighCapacity):
        u = rng.random(n_blocks)
        g = -np.log1p(-u)
        rate = np.floor(model.bandwidth_symbols * np.log2(1.0 + model.mean_snr * g) / 8.0)
        return RateTrace(tuple(int(v) for v in rate))

    raise ValidationError("unknown channel model %r" % (model,))


def gilbert_elliott_good_occupancy(model: GilbertElliott) -> float:
    """Stationary probability of the good state, p_bg / (p_gb + p_bg)."""
    if model.p_gb + model.p_bg == 0:
        return 1.0  # absorbing start state
    return model.p_bg / (model.p_gb + model.p_bg)


def write_trace_file(trace: RateTrace) -> bytes:
    """Serialize a trace to the TRACE format (u32 little-endian rates)."""
    if any(r > _RATE_MAX for r in trace.rates):
        raise ValidationError("rate exceeds the format's u32 range")
    body = struct.pack("<%dI" % len(trace), *trace.rates)
    return _HEADER.pack(TRACE_MAGIC, TRACE_VERSION, len(trace)) + body


def read_trace_file(data: bytes) -> RateTrace:
    """Parse TRACE bytes; total over arbitrary input."""
    if len(data) < 4:
        raise TruncatedError("shorter than the magic")
    if data[:4] != TRACE_MAGIC:
        raise BadMagicError("not a TRACE file")
    if len(data) < _HEADER.size:
        raise TruncatedError("header incomplete")
    _, version, n = _HEADER.unpack_from(data)
    if version != TRACE_VERSION:
        raise BadVersionError("unsupported TRACE version %d" % version)
    if n == 0:
        raise ValidationError("trace must be non-empty")
    expected = _HEADER.size + 4 * n
    if len(data) < expected:
        raise TruncatedError("need %d bytes, have %d" % (expected, len(data)))
    if len(data) > expected:
        raise TrailingDataError("%d trailing bytes" % (len(data) - expected))
    rates = struct.unpack_from("<%dI" % n, data, _HEADER.size)
    return RateTrace(rates)
