"""Test-signal synthesis: clipped-cosine carriers, modulating waveforms and AM.

All generators work on integer sample indices so that a long record can be
produced in chunks (``start`` argument) and still be bitwise identical to a
single-shot synthesis.  Phases are tracked with an exact rational phase
accumulator; a waveform whose period is an integer number of samples repeats
exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

SHAPES = ("sinusoidal", "triangular", "trapezoidal", "rectangular")

SHAPE_ALIASES = {
    "sin": "sinusoidal",
    "sine": "sinusoidal",
    "tri": "triangular",
    "triangle": "triangular",
    "trap": "trapezoidal",
    "trapezoid": "trapezoidal",
    "rect": "rectangular",
    "square": "rectangular",
}

# default synthesis rate, 10x the front-end cutoff
DEFAULT_SAMPLE_RATE = 80_000.0
DEFAULT_THD_HARMONICS = 40


def canonical_shape(shape: str) -> str:
    name = SHAPE_ALIASES.get(shape.lower(), shape.lower())
    if name not in SHAPES:
        raise ValueError(f"shape: unknown modulating shape {shape!r}; expected one of {SHAPES}")
    return name


@dataclass(frozen=True)
class CarrierSpec:
    """Supply voltage before any fluctuation: a cosine clipped at ``m_c``.

    ``m_c`` is the ratio of the amplitude after clipping to the amplitude
    before clipping; ``m_c == 1`` is the undistorted sinusoid.
    """

    f_c: float = 50.0
    U_c: float = 230.0
    m_c: float = 1.0

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"f_c: must be > 0, got {self.f_c}")
        if not self.U_c > 0:
            raise ValueError(f"U_c: must be > 0, got {self.U_c}")
        if not 0 < self.m_c <= 1:
            raise ValueError(f"m_c: clipping level must lie in (0, 1], got {self.m_c}")


@dataclass(frozen=True)
class ModulatingSpec:
    """Voltage fluctuation: waveform shape, frequency (Hz) and depth (percent)."""

    shape: str = "sinusoidal"
    f_m: float = 8.8
    depth: float = 1.0
    phase: float = 0.0  # fraction of T_m

    def __post_init__(self):
        object.__setattr__(self, "shape", canonical_shape(self.shape))
        if not self.f_m > 0:
            raise ValueError(f"f_m: must be > 0, got {self.f_m}")
        if not self.depth >= 0:
            raise ValueError(f"depth: must be >= 0, got {self.depth}")


@dataclass(frozen=True)
class SignalBuffer:
    """Uniformly sampled real waveform."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0
    unit: str = "V"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate: must be > 0, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))

    # -- interchange formats -------------------------------------------------

    def to_csv(self, path) -> None:
        """Headerless ``time_s,value`` rows."""
        data = np.column_stack([self.times, self.samples])
        np.savetxt(path, data, delimiter=",", fmt="%.10g")

    @classmethod
    def from_csv(cls, path) -> "SignalBuffer":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape[0] < 2:
            raise ValueError("need at least two rows to infer the sample rate")
        dt = np.median(np.diff(data[:, 0]))
        return cls(data[:, 1], 1.0 / dt, t0=float(data[0, 0]))

    def to_bytes(self) -> bytes:
        """Little-endian frame: f64 sample rate, u64 count, f64 samples."""
        header = struct.pack("<dQ", float(self.sample_rate), self.samples.size)
        return header + self.samples.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SignalBuffer":
        if len(blob) < 16:
            raise ValueError("truncated frame header")
        rate, count = struct.unpack_from("<dQ", blob, 0)
        if len(blob) != 16 + 8 * count:
            raise ValueError(f"frame declares {count} samples but carries {(len(blob) - 16) / 8:g}")
        samples = np.frombuffer(blob, dtype="<f8", offset=16, count=count).astype(np.float64)
        return cls(samples, rate)

    def write_binary(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read_binary(cls, path) -> "SignalBuffer":
        return cls.from_bytes(Path(path).read_bytes())


def _rational(x: float, max_den: int) -> Fraction:
    return Fraction(x).limit_denominator(max_den)


def cycle_position(freq: float, sample_rate: float, start: int, count: int, offset: float = 0.0) -> np.ndarray:
    """Fractional position within the period, in [0, 1), for samples ``start .. start+count``.

    Computed with integer arithmetic: ``n * freq / sample_rate`` is reduced
    modulo one exactly, so sample-aligned periods repeat bit for bit.
    """
    f = _rational(freq, 10_000)
    fs = _rational(sample_rate, 100)
    num = f.numerator * fs.denominator
    den = f.denominator * fs.numerator
    n = np.arange(start, start + count, dtype=np.int64)
    off = _rational(offset % 1.0, 10_000)
    # (n*num/den + p/q) mod 1 == ((n*num*q + p*den) mod (den*q)) / (den*q)
    q, p = off.denominator, off.numerator
    modulus = den * q
    if abs(start + count) * num * q + p * den >= 2**62:
        raise OverflowError("phase accumulator range exceeded; shorten the record")
    acc = (n * (num * q) + p * den) % modulus
    return acc / modulus


def _check_duration(sample_rate: float, duration: float) -> int:
    count = int(round(duration * sample_rate))
    if count <= 0:
        raise ValueError(f"duration: must cover at least one sample, got {duration}")
    return count


def clipped_cosine(m_c: float, pos: np.ndarray) -> np.ndarray:
    """Unit-amplitude cosine clipped at ``+-m_c``."""
    x = np.cos(2 * np.pi * pos)
    if m_c < 1:
        np.clip(x, -m_c, m_c, out=x)
    return x


def _sampled_rms(m_c: float, f_c: float, sample_rate: float) -> float:
    # rms over one sampled period when the period is a whole number of
    # samples, else the continuous-time value
    period = sample_rate / f_c
    if abs(period - round(period)) < 1e-9 and round(period) >= 2:
        pos = cycle_position(f_c, sample_rate, 0, int(round(period)))
        return float(np.sqrt(np.mean(clipped_cosine(m_c, pos) ** 2)))
    return clipped_cosine_rms(m_c)


def clipped_cosine_rms(m_c: float) -> float:
    """Exact rms of ``clip(cos(theta), -m_c, m_c)`` over a period."""
    if m_c >= 1:
        return np.sqrt(0.5)
    a = np.arccos(m_c)  # clipping holds for |theta| < a and |theta - pi| < a
    # integral of cos^2 over the unclipped arcs [a, pi - a] and [pi + a, 2pi - a]
    unclipped = (np.pi - 2 * a) - np.sin(2 * a)
    mean_sq = (4 * a * m_c**2 + unclipped) / (2 * np.pi)
    return float(np.sqrt(mean_sq))


def synthesize_carrier(
    spec: CarrierSpec,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    duration: float = 1.0,
    *,
    start: int = 0,
    count: int | None = None,
) -> SignalBuffer:
    """Clip ``cos(2 pi f_c t)`` symmetrically at ``+-m_c`` and rescale to rms ``U_c``.

    The rms scale factor is taken from one sampled period (or the closed-form
    continuous rms when the period is not a whole number of samples), so it
    does not depend on which chunk is being synthesised.  ``start``/``count``
    select a sample range for chunked synthesis; otherwise ``duration``
    seconds from t = 0.
    """
    if sample_rate < 20 * spec.f_c:
        raise ValueError(f"sample_rate: need >= 20*f_c = {20 * spec.f_c:g} Hz, got {sample_rate:g}")
    if count is None:
        if duration < 1.0 / spec.f_c - 0.5 / sample_rate:
            raise ValueError("duration: must cover at least one fundamental period")
        count = _check_duration(sample_rate, duration)
    pos = cycle_position(spec.f_c, sample_rate, start, count)
    x = clipped_cosine(spec.m_c, pos) * (spec.U_c / _sampled_rms(spec.m_c, spec.f_c, sample_rate))
    return SignalBuffer(x, sample_rate, t0=start / sample_rate, meta={"carrier": spec})


def modulating_waveform(shape: str, pos: np.ndarray) -> np.ndarray:
    """Normalised u_mod in [-1, 1] as a function of cycle position in [0, 1).

    Every shape begins its rising segment at position 0: the sine at its
    upward zero crossing, triangle and trapezoid at -1, the rectangle at the
    start of its high half.
    """
    shape = canonical_shape(shape)
    if shape == "sinusoidal":
        return np.sin(2 * np.pi * pos)
    if shape == "triangular":
        return np.where(pos < 0.5, 4 * pos - 1, 3 - 4 * pos)
    if shape == "trapezoidal":
        # rise, high plateau, fall, low plateau; each a quarter period
        return np.select(
            [pos < 0.25, pos < 0.5, pos < 0.75],
            [8 * pos - 1, np.ones_like(pos), 5 - 8 * pos],
            default=-1.0,
        )
    return np.where(pos < 0.5, 1.0, -1.0)


def synthesize_modulating(
    spec: ModulatingSpec,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    duration: float = 1.0,
    *,
    start: int = 0,
    count: int | None = None,
) -> SignalBuffer:
    if sample_rate < 20 * spec.f_m:
        raise ValueError(f"sample_rate: need >= 20*f_m = {20 * spec.f_m:g} Hz, got {sample_rate:g}")
    if count is None:
        count = _check_duration(sample_rate, duration)
    pos = cycle_position(spec.f_m, sample_rate, start, count, offset=spec.phase)
    return SignalBuffer(
        modulating_waveform(spec.shape, pos),
        sample_rate,
        t0=start / sample_rate,
        unit="1",
        meta={"modulating": spec},
    )


def modulate(carrier: SignalBuffer, mod: SignalBuffer, depth: float) -> SignalBuffer:
    """u_IN = (1 + depth/200 * u_mod) * u_c, depth in percent (peak-to-peak)."""
    if carrier.sample_rate != mod.sample_rate:
        raise ValueError(f"sample rates differ: {carrier.sample_rate} vs {mod.sample_rate}")
    if len(carrier) != len(mod):
        raise ValueError(f"lengths differ: {len(carrier)} vs {len(mod)}")
    if not 0 <= depth < 200:
        raise ValueError(f"depth: must lie in [0, 200) percent, got {depth}")
    envelope = 1.0 + (depth / 200.0) * mod.samples
    return SignalBuffer(envelope * carrier.samples, carrier.sample_rate, t0=carrier.t0, unit=carrier.unit)


def test_signal(
    carrier: CarrierSpec,
    mod: ModulatingSpec,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    *,
    start: int = 0,
    count: int,
) -> SignalBuffer:
    """Carrier modulated by ``mod`` over samples ``start .. start+count``."""
    c = synthesize_carrier(carrier, sample_rate, start=start, count=count)
    m = synthesize_modulating(mod, sample_rate, start=start, count=count)
    return modulate(c, m, mod.depth)


test_signal.__test__ = False  # not a pytest test


def harmonic_amplitudes(signal: SignalBuffer, f_c: float, n_harmonics: int) -> np.ndarray:
    """Amplitudes of harmonics 1..n from a DFT over an integer number of periods."""
    periods = len(signal) * f_c / signal.sample_rate
    k = int(round(periods))
    if k < 1 or abs(periods - k) > 1e-6 * max(1.0, periods):
        raise ValueError(f"signal spans {periods:.6g} fundamental periods; need an integer count")
    spectrum = np.abs(np.fft.rfft(signal.samples)) * 2 / len(signal)
    bins = k * np.arange(1, n_harmonics + 1)
    bins = bins[bins < spectrum.size]
    return spectrum[bins]


def thd(signal: SignalBuffer, f_c: float, n_harmonics: int = DEFAULT_THD_HARMONICS) -> float:
    """sqrt(sum U_h^2, h = 2..n) / U_1, synchronised to ``f_c``."""
    if n_harmonics < 2:
        raise ValueError("n_harmonics: must be >= 2")
    amps = harmonic_amplitudes(signal, f_c, n_harmonics)
    return float(np.sqrt(np.sum(amps[1:] ** 2)) / amps[0])
