"""Block 5: statistical evaluation of P_inst into short-term severity Pst.

Percentiles are exact order statistics.  ``P_k`` is the level exceeded by
no more than k % of the samples, i.e. the smallest sample value ``x`` with
``#{p > x} <= k/100 * N``.
"""

from __future__ import annotations

import numpy as np

# (weight, percentiles averaged into the smoothed level)
PST_TERMS = (
    (0.0314, (0.1,)),
    (0.0525, (0.7, 1.0, 1.5)),
    (0.0657, (2.2, 3.0, 4.0)),
    (0.28, (6.0, 8.0, 10.0, 13.0, 17.0)),
    (0.08, (30.0, 50.0, 80.0)),
)
PERCENTILES = tuple(sorted({k for _, ks in PST_TERMS for k in ks}))
COEFFICIENT_SUM = sum(w for w, _ in PST_TERMS)  # 0.5096


def exceedance_levels(p_inst, levels=PERCENTILES, *, presorted: bool = False) -> dict[float, float]:
    """Map each k in ``levels`` to P_k, the level exceeded k % of the time."""
    x = np.asarray(p_inst, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no P_inst samples to classify")
    if not presorted:
        x = np.sort(x)
    n = x.size
    out = {}
    for k in levels:
        # smallest index i with n - (i + 1) <= k/100 * n  ->  i = ceil(n (1 - k/100)) - 1
        i = int(np.ceil(n * (1.0 - k / 100.0) - 1e-9)) - 1
        out[k] = float(x[min(max(i, 0), n - 1)])
    return out


def pst_from_levels(levels: dict[float, float]) -> float:
    total = 0.0
    for weight, ks in PST_TERMS:
        total += weight * np.mean([levels[k] for k in ks])
    return float(np.sqrt(max(total, 0.0)))


def classify(p_inst, window: float | None = None, rate: float | None = None) -> float:
    """Pst of a P_inst record.

    With ``window`` and ``rate`` given, the record must hold at least
    ``window * rate`` samples and only the first that many are used.
    """
    x = np.asarray(p_inst, dtype=np.float64)
    if window is not None and rate is not None:
        need = int(round(window * rate))
        if x.size < need:
            raise ValueError(f"need {need} P_inst samples for a {window:g} s window, got {x.size}")
        x = x[:need]
    if not np.all(np.isfinite(x)):
        raise ValueError("P_inst contains non-finite values")
    return pst_from_levels(exceedance_levels(x))


def cpf_levels(p_inst, n_bins: int = 10_000, levels=PERCENTILES, floor: float = 1e-4) -> dict[float, float]:
    """Percentiles from a logarithmically binned cumulative probability function.

    This is the classical instrument approach; bins span ``floor`` to the
    record maximum and levels are interpolated linearly inside a bin.
    """
    x = np.asarray(p_inst, dtype=np.float64)
    top = max(float(x.max()), floor * 10)
    edges = np.concatenate([[0.0], np.geomspace(floor, top, n_bins)])
    counts, _ = np.histogram(np.clip(x, 0, top), bins=edges)
    # fraction of samples strictly above each upper edge
    above = 1.0 - np.cumsum(counts) / x.size
    out = {}
    for k in levels:
        target = k / 100.0
        j = int(np.searchsorted(-above, -target, side="left"))  # first bin with above <= target
        j = min(j, n_bins - 1)
        lo, hi = edges[j], edges[j + 1]
        above_lo = above[j - 1] if j > 0 else 1.0
        span = above_lo - above[j]
        frac = 1.0 if span <= 0 else (above_lo - target) / span
        out[k] = float(lo + frac * (hi - lo))
    return out
