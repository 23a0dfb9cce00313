"""Acquisition front end: linear-phase low-pass FIR followed by downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .signals import SignalBuffer

DEFAULT_ORDER = 200
DEFAULT_CUTOFF = 8_000.0
DEFAULT_DECIMATION = 4


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray
    order: int
    cutoff: float
    design_rate: float

    def __post_init__(self):
        taps = np.asarray(self.coefficients, dtype=np.float64)
        taps.flags.writeable = False
        object.__setattr__(self, "coefficients", taps)

    @property
    def group_delay(self) -> int:
        """Delay in samples; also the number of warm-up samples at each edge."""
        return self.order // 2

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        _, h = sps.freqz(self.coefficients, worN=np.atleast_1d(np.asarray(freqs, float)), fs=self.design_rate)
        return h

    def to_csv(self, path) -> None:
        np.savetxt(path, self.coefficients, fmt="%.17g", header="tap", comments="")


def design_lowpass_fir(
    order: int = DEFAULT_ORDER, cutoff: float = DEFAULT_CUTOFF, sample_rate: float = 80_000.0
) -> FirFilter:
    """Hamming-windowed sinc low-pass with ``order + 1`` taps and unit DC gain."""
    if order < 2 or order % 2:
        raise ValueError(f"order: must be a positive even number, got {order}")
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError(f"cutoff: must lie in (0, {sample_rate / 2:g}) Hz, got {cutoff:g}")
    taps = sps.firwin(order + 1, cutoff, window="hamming", fs=sample_rate)
    # exact symmetry and DC normalisation
    taps = 0.5 * (taps + taps[::-1])
    taps /= taps.sum()
    return FirFilter(taps, order, float(cutoff), float(sample_rate))


def apply_fir(sig: SignalBuffer, fir: FirFilter) -> SignalBuffer:
    """Filter with group-delay compensation; output is time-aligned and same length.

    The first and last ``fir.group_delay`` samples see zero padding and
    should be treated as warm-up.
    """
    if sig.sample_rate != fir.design_rate:
        raise ValueError(f"sample rate {sig.sample_rate:g} Hz does not match filter design rate {fir.design_rate:g} Hz")
    y = sps.oaconvolve(sig.samples, fir.coefficients, mode="full")
    d = fir.group_delay
    y = y[d : d + len(sig)]
    return SignalBuffer(y, sig.sample_rate, t0=sig.t0, unit=sig.unit, meta={"warmup": d})


def decimate(sig: SignalBuffer, factor: int, cutoff: float | None = None) -> SignalBuffer:
    """Keep every ``factor``-th sample.

    ``cutoff`` is the band limit already applied upstream; when given, a
    factor that would put it above the new Nyquist frequency is refused.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor: must be an integer >= 1, got {factor}")
    factor = int(factor)
    new_rate = sig.sample_rate / factor
    if cutoff is not None and cutoff >= new_rate / 2:
        raise ValueError(
            f"factor {factor}: band limit {cutoff:g} Hz exceeds the new Nyquist frequency {new_rate / 2:g} Hz"
        )
    return SignalBuffer(sig.samples[::factor], new_rate, t0=sig.t0, unit=sig.unit)


def chain(sig: SignalBuffer, fir: FirFilter, factor: int = DEFAULT_DECIMATION) -> SignalBuffer:
    """FIR then decimate, in the anti-alias order."""
    return decimate(apply_fir(sig, fir), factor, cutoff=fir.cutoff)


class StreamingFrontEnd:
    """Chunked FIR + decimation for records too long to hold in memory.

    Output sample ``j`` corresponds to input sample ``j * factor``, exactly
    as :func:`chain` would produce away from the edges; the output lags the
    input by ``group_delay`` samples, so the last few input samples of a
    chunk only appear with the next chunk.
    """

    def __init__(self, fir: FirFilter, factor: int = DEFAULT_DECIMATION):
        if fir.cutoff >= fir.design_rate / factor / 2:
            raise ValueError(f"factor {factor}: band limit {fir.cutoff:g} Hz exceeds the new Nyquist frequency")
        self.fir = fir
        self.factor = int(factor)
        self.output_rate = fir.design_rate / self.factor
        self._history = np.zeros(fir.order)
        self._n = 0  # input samples consumed

    def push(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        ext = np.concatenate([self._history, x])
        y = sps.oaconvolve(ext, self.fir.coefficients, mode="valid")
        # y[i] is the causal output at input index self._n + i, aligned to
        # input index self._n + i - delay
        aligned = self._n - self.fir.group_delay + np.arange(y.size)
        keep = (aligned >= 0) & (aligned % self.factor == 0)
        self._history = ext[-self.fir.order :]
        self._n += x.size
        return y[keep]
