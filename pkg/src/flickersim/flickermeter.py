"""Software flickermeter for the 230 V / 50 Hz reference lamp.

Signal path::

    block 1  self-normalisation by a slow rms tracker
    block 2  squaring demodulator
    block 3  0.05 Hz high-pass, 35 Hz Butterworth low-pass, lamp-eye weighting
    block 4  squaring, 300 ms first-order smoothing, scaling to P_inst
    block 5  percentile classifier -> Pst

Blocks 1-4 are stateful IIR filters in second-order sections and run
chunk by chunk through :class:`Flickermeter`; the one-shot functions
``block*_`` wrap the same code for whole buffers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from . import classifier
from .signals import SignalBuffer

log = logging.getLogger(__name__)

# Weighting filter, 230 V / 50 Hz reference lamp (IEC 61000-4-15)
WEIGHTING_K = 1.74802
WEIGHTING_LAMBDA = 2 * np.pi * 4.05981
WEIGHTING_OMEGA1 = 2 * np.pi * 9.15494
WEIGHTING_OMEGA2 = 2 * np.pi * 2.27979
WEIGHTING_OMEGA3 = 2 * np.pi * 1.22535
WEIGHTING_OMEGA4 = 2 * np.pi * 21.9

HIGHPASS_CUTOFF = 0.05
LOWPASS_CUTOFF = 35.0
LOWPASS_ORDER = 6
SMOOTHING_TIME_CONSTANT = 0.3
PEAK_FREQUENCY = 8.8

# Sinusoidal 8.8 Hz fluctuation that produces a maximum P_inst of exactly 1
REFERENCE_DEPTH = 0.250  # percent
REFERENCE_FREQUENCY = 8.8

# P_inst scale for unit-rms normalisation.  Regenerate with
# ``calibrate()``: run REFERENCE_DEPTH at REFERENCE_FREQUENCY on a
# 230 V / 50 Hz sinusoid at 20 kHz with scale 1 and take 1 / max P_inst.
CALIBRATION = 309_551.0

PST_FLOOR = 0.05


def below_floor(pst: float) -> bool:
    return pst < PST_FLOOR


@dataclass(frozen=True)
class FlickermeterConfig:
    input_rate: float = 20_000.0
    classifier_rate: float = 500.0
    window: float = 600.0
    settle: float = 30.0
    normalization_time_constant: float = 60.0
    calibration: float = CALIBRATION
    lamp_reference: str = "230V_50Hz"
    weighting: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.lamp_reference != "230V_50Hz":
            raise ValueError(f"lamp_reference: only '230V_50Hz' is supported, got {self.lamp_reference!r}")
        if self.input_rate < 2000:
            raise ValueError(f"input_rate: must be >= 2000 Hz, got {self.input_rate:g}")
        if self.classifier_rate < 50:
            raise ValueError(f"classifier_rate: must be >= 50 Hz, got {self.classifier_rate:g}")
        ratio = self.input_rate / self.classifier_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("classifier_rate must divide input_rate")
        if not self.window > 0:
            raise ValueError(f"window: must be > 0, got {self.window}")
        if self.settle < 0:
            raise ValueError(f"settle: must be >= 0, got {self.settle}")

    @property
    def classifier_step(self) -> int:
        return int(round(self.input_rate / self.classifier_rate))

    def with_(self, **kw) -> "FlickermeterConfig":
        return replace(self, **kw)


# -- filter design --------------------------------------------------------------


def _assert_stable(sos: np.ndarray, name: str) -> np.ndarray:
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    if poles.size and np.max(np.abs(poles)) >= 1:
        raise ValueError(f"{name}: unstable after discretisation (max |pole| = {np.max(np.abs(poles)):.9f})")
    return sos


def _prewarped_bilinear(z, p, k, fs: float, f0: float):
    """Bilinear transform with the analog frequency ``f0`` mapped exactly."""
    w0 = 2 * np.pi * f0
    fs_warp = w0 / (2 * np.tan(w0 / (2 * fs)))
    return sps.bilinear_zpk(z, p, k, fs_warp)


def weighting_zpk(**overrides):
    """Analog zeros, poles and gain of the lamp-eye-brain weighting filter.

    H(s) = k w1 s / (s^2 + 2 lambda s + w1^2) * (1 + s/w2) / ((1 + s/w3)(1 + s/w4))
    """
    k = overrides.get("k", WEIGHTING_K)
    lam = overrides.get("lam", WEIGHTING_LAMBDA)
    w1 = overrides.get("w1", WEIGHTING_OMEGA1)
    w2 = overrides.get("w2", WEIGHTING_OMEGA2)
    w3 = overrides.get("w3", WEIGHTING_OMEGA3)
    w4 = overrides.get("w4", WEIGHTING_OMEGA4)
    zeros = np.array([0.0, -w2])
    poles = np.concatenate([np.roots([1.0, 2 * lam, w1**2]), [-w3, -w4]])
    gain = k * w1 * w3 * w4 / w2
    return zeros, poles, gain


def weighting_response(freqs, **overrides) -> np.ndarray:
    """Analog magnitude response of the weighting filter."""
    z, p, k = weighting_zpk(**overrides)
    _, h = sps.freqs_zpk(z, p, k, worN=2 * np.pi * np.asarray(freqs, dtype=float))
    return np.abs(h)


@dataclass(frozen=True)
class FilterBank:
    """Discretised block 3 and block 4 filters for one input rate."""

    highpass: np.ndarray
    lowpass: np.ndarray
    weighting: np.ndarray
    smoothing: np.ndarray

    @classmethod
    def design(cls, fs: float, weighting: dict | None = None) -> "FilterBank":
        hp = sps.butter(1, HIGHPASS_CUTOFF, "highpass", fs=fs, output="sos")
        lp = sps.butter(LOWPASS_ORDER, LOWPASS_CUTOFF, "lowpass", fs=fs, output="sos")
        z, p, k = _prewarped_bilinear(*weighting_zpk(**(weighting or {})), fs, PEAK_FREQUENCY)
        wt = sps.zpk2sos(z, p, k)
        sm = sps.butter(1, 1 / (2 * np.pi * SMOOTHING_TIME_CONSTANT), "lowpass", fs=fs, output="sos")
        return cls(
            _assert_stable(hp, "high-pass"),
            _assert_stable(lp, "low-pass"),
            _assert_stable(wt, "weighting"),
            _assert_stable(sm, "smoothing"),
        )

    @property
    def block3(self) -> np.ndarray:
        return np.vstack([self.highpass, self.lowpass, self.weighting])

    def block3_response(self, freqs, fs: float) -> np.ndarray:
        _, h = sps.sosfreqz(self.block3, worN=np.asarray(freqs, dtype=float), fs=fs)
        return np.abs(h)


# -- state ------------------------------------------------------------------------


class FlickermeterState:
    """Per-stream filter memories and the classifier sample store.

    Not shareable between streams; hand over between threads only between
    ``push`` calls.
    """

    def __init__(self, config: FlickermeterConfig, bank: FilterBank | None = None):
        self.config = config
        self.bank = bank or FilterBank.design(config.input_rate, config.weighting or None)
        self.mean_square: float | None = None
        self.zi_block3: np.ndarray | None = None
        self.zi_smooth = np.zeros((self.bank.smoothing.shape[0], 2))
        self.samples_seen = 0
        self.p_inst: list[np.ndarray] = []

    def check_finite(self) -> None:
        for arr in (self.zi_block3, self.zi_smooth):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise FloatingPointError("flickermeter filter state became non-finite")


def block1_normalize(x: np.ndarray, state: FlickermeterState) -> np.ndarray:
    """Divide by the tracked rms (first-order low-pass on x^2)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("block 1: non-finite input samples")
    fs = state.config.input_rate
    alpha = -np.expm1(-1.0 / (state.config.normalization_time_constant * fs))
    sq = x * x
    if state.mean_square is None:
        # seed with the mean square of the first 200 ms
        head = sq[: max(1, int(0.2 * fs))]
        state.mean_square = float(np.mean(head))
    ms, zf = sps.lfilter([alpha], [1.0, alpha - 1.0], sq, zi=[(1 - alpha) * state.mean_square])
    state.mean_square = float(ms[-1]) if ms.size else state.mean_square
    if np.any(ms <= 0):
        raise ValueError("block 1: input has zero mean square; cannot normalise")
    return x / np.sqrt(ms)


def block2_square(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * x


def block3_weight(x: np.ndarray, state: FlickermeterState) -> np.ndarray:
    """High-pass, Butterworth low-pass and weighting filter in cascade."""
    sos = state.bank.block3
    if state.zi_block3 is None:
        # start the high-pass in steady state for the initial DC level
        zi = np.zeros((sos.shape[0], 2))
        head = x[: max(1, int(0.2 * state.config.input_rate))]
        zi[0] = sps.sosfilt_zi(state.bank.highpass)[0] * float(np.mean(head))
        state.zi_block3 = zi
    y, state.zi_block3 = sps.sosfilt(sos, x, zi=state.zi_block3)
    return y


def block4_smooth(x: np.ndarray, state: FlickermeterState) -> np.ndarray:
    """Square, 300 ms first-order smoothing, scale to perceptibility units."""
    y, state.zi_smooth = sps.sosfilt(state.bank.smoothing, x * x, zi=state.zi_smooth)
    return state.config.calibration * y


def block5_classify(p_inst, window: float, rate: float) -> float:
    return classifier.classify(p_inst, window, rate)


# -- stream driver ------------------------------------------------------------------


class Flickermeter:
    """Streaming flickermeter; feed voltage chunks with :meth:`push`."""

    def __init__(self, config: FlickermeterConfig | None = None, bank: FilterBank | None = None):
        self.config = config or FlickermeterConfig()
        self.state = FlickermeterState(self.config, bank)

    def push(self, x) -> np.ndarray:
        """Process a chunk; return the P_inst samples it produced at the classifier rate."""
        st = self.state
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            return np.empty(0)
        y = block1_normalize(x, st)
        y = block2_square(y)
        y = block3_weight(y, st)
        p = block4_smooth(y, st)
        step = self.config.classifier_step
        first = (-st.samples_seen) % step
        out = p[first::step]
        st.samples_seen += x.size
        st.check_finite()
        st.p_inst.append(out)
        return out

    def p_inst(self) -> np.ndarray:
        return np.concatenate(self.state.p_inst) if self.state.p_inst else np.empty(0)

    def pst(self) -> float:
        """Pst over the window that starts after the settling prefix."""
        cfg = self.config
        p = self.p_inst()
        start = int(round(cfg.settle * cfg.classifier_rate))
        need = int(round(cfg.window * cfg.classifier_rate))
        if p.size < start + need:
            raise ValueError(
                f"record too short: need {cfg.settle + cfg.window:g} s, have {p.size / cfg.classifier_rate:g} s"
            )
        return block5_classify(p[start : start + need], cfg.window, cfg.classifier_rate)


def measure_pst(sig: SignalBuffer, config: FlickermeterConfig | None = None, chunk: float = 10.0) -> float:
    """Run blocks 1-5 on ``sig``; the first ``config.settle`` seconds are discarded."""
    config = config or FlickermeterConfig(input_rate=sig.sample_rate)
    if sig.sample_rate != config.input_rate:
        raise ValueError(f"signal rate {sig.sample_rate:g} Hz does not match meter input rate {config.input_rate:g} Hz")
    if sig.duration + 1e-9 < config.settle + config.window:
        raise ValueError(f"signal lasts {sig.duration:g} s; need settle + window = {config.settle + config.window:g} s")
    meter = Flickermeter(config)
    n = int(chunk * config.input_rate)
    for i in range(0, len(sig), n):
        meter.push(sig.samples[i : i + n])
    return meter.pst()


def p_inst_trace(sig: SignalBuffer, config: FlickermeterConfig | None = None) -> SignalBuffer:
    """P_inst at the classifier rate for the whole record (no settling cut)."""
    config = config or FlickermeterConfig(input_rate=sig.sample_rate)
    meter = Flickermeter(config)
    meter.push(sig.samples)
    return SignalBuffer(meter.p_inst(), config.classifier_rate, t0=sig.t0, unit="1")


def write_p_inst_csv(trace: SignalBuffer, path) -> None:
    data = np.column_stack([trace.times, trace.samples])
    np.savetxt(path, data, delimiter=",", fmt="%.9g", header="time_s,p_inst", comments="")


def reference_signal(depth: float, f_m: float, shape: str, fs: float, duration: float, U: float = 230.0) -> SignalBuffer:
    """Sinusoidal 50 Hz voltage with the given fluctuation, sampled at ``fs``."""
    from .signals import CarrierSpec, ModulatingSpec, test_signal

    n = int(round(duration * fs))
    return test_signal(CarrierSpec(50.0, U, 1.0), ModulatingSpec(shape, f_m, depth), fs, count=n)


def calibrate(input_rate: float = 20_000.0, settle: float = 20.0, span: float = 10.0) -> float:
    """Scale factor making the reference fluctuation peak at P_inst = 1."""
    cfg = FlickermeterConfig(input_rate=input_rate, calibration=1.0, window=span, settle=settle)
    sig = reference_signal(REFERENCE_DEPTH, REFERENCE_FREQUENCY, "sinusoidal", input_rate, settle + span)
    trace = p_inst_trace(sig, cfg)
    start = int(settle * cfg.classifier_rate)
    return float(1.0 / np.max(trace.samples[start:]))
