"""Built-in conformance suite run by ``flickersim validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import classifier
from . import flickermeter as fm
from .signals import CarrierSpec, synthesize_carrier, thd

# Relative voltage fluctuation (percent) giving max P_inst = 1 on the
# 230 V / 50 Hz lamp, IEC 61000-4-15 input/output tables (subset).
PINST_UNITY_SINUSOIDAL = {0.5: 2.34, 1.0: 1.432, 2.0: 0.882, 5.0: 0.398, 8.8: 0.250, 15.0: 0.432, 20.0: 0.700}
PINST_UNITY_RECTANGULAR = {0.5: 0.514, 1.0: 0.471, 5.0: 0.293, 8.8: 0.199, 15.0: 0.344, 20.0: 0.546}
PINST_TOLERANCE = 0.05

# Rectangular fluctuations giving Pst = 1: changes per minute -> percent
PST_UNITY_RECTANGULAR = {1: 2.724, 2: 2.211, 7: 1.459, 39: 0.906, 110: 0.725, 1620: 0.402}
# Sinusoidal 8.8 Hz row: steady flicker has P_inst ~ const, so Pst = 1 needs
# P_inst = 1 / sum(weights), i.e. the P_inst = 1 depth scaled by 1 / sqrt(sum(weights))
PST_UNITY_SINUSOIDAL = {8.8: fm.REFERENCE_DEPTH / np.sqrt(classifier.COEFFICIENT_SUM)}
PST_TOLERANCE = 0.08

THD_TARGETS = {1.0: (0.0, 1e-12), 0.8: (0.08, 0.01), 0.1: (0.43, 0.02)}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_thd() -> list[Check]:
    out = []
    for m_c, (target, tol) in THD_TARGETS.items():
        c = synthesize_carrier(CarrierSpec(50.0, 230.0, m_c), 80_000.0, 1.0)
        v = thd(c, 50.0)
        out.append(Check(f"THD m_c={m_c:g}", abs(v - target) <= tol, f"{v:.4%} (target {target:.0%} +- {tol:.2g})"))
    return out


def check_weighting(input_rate: float = 20_000.0, weighting: dict | None = None) -> list[Check]:
    bank = fm.FilterBank.design(input_rate, weighting)
    f = np.arange(0.5, 35.0001, 0.01)
    g = bank.block3_response(f, input_rate)
    peak = float(f[np.argmax(g)])
    out = [Check("weighting peak", abs(peak - 8.8) <= 0.3, f"{peak:.2f} Hz (8.8 +- 0.3)")]
    g100 = bank.block3_response([100.0], input_rate)[0]
    att = 20 * np.log10(g100 / g.max())
    out.append(Check("100 Hz rejection", att <= -40, f"{att:.1f} dB relative to peak (<= -40)"))
    return out


def _max_pinst(depth, f_m, shape, config) -> float:
    sig = fm.reference_signal(depth, f_m, shape, config.input_rate, config.settle + config.window)
    tr = fm.p_inst_trace(sig, config)
    return float(tr.samples[int(config.settle * config.classifier_rate) :].max())


def check_pinst_tables(input_rate: float = 20_000.0, weighting: dict | None = None) -> list[Check]:
    cfg = fm.FlickermeterConfig(input_rate=input_rate, settle=20.0, window=20.0, weighting=weighting or {})
    out = []
    for shape, table in (("sinusoidal", PINST_UNITY_SINUSOIDAL), ("rectangular", PINST_UNITY_RECTANGULAR)):
        for f_m, depth in table.items():
            p = _max_pinst(depth, f_m, shape, cfg)
            out.append(Check(f"P_inst=1 {shape} {f_m:g} Hz", abs(p - 1) <= PINST_TOLERANCE, f"max P_inst {p:.4f} at {depth:g} %"))
    return out


def check_classifier() -> list[Check]:
    out = []
    unit = np.sqrt(0.0314 + 0.0525 + 0.0657 + 0.28 + 0.08)
    for level, expect in ((1.0, unit), (0.0, 0.0), (4.0, 2 * unit)):
        v = classifier.classify(np.full(30_000, level))
        out.append(Check(f"constant P_inst={level:g}", abs(v - expect) <= 1e-9, f"Pst {v:.9f} (expected {expect:.9f})"))
    return out


def check_pst_rows(input_rate: float = 20_000.0, window: float = 600.0, weighting: dict | None = None) -> list[Check]:
    cfg = fm.FlickermeterConfig(input_rate=input_rate, settle=20.0, window=window, weighting=weighting or {})
    rows = [("rectangular", cpm / 120.0, d, f"{cpm} cpm") for cpm, d in PST_UNITY_RECTANGULAR.items()]
    rows += [("sinusoidal", f, d, f"{f:g} Hz") for f, d in PST_UNITY_SINUSOIDAL.items()]
    out = []
    for shape, f_m, depth, label in rows:
        sig = fm.reference_signal(depth, f_m, shape, input_rate, cfg.settle + cfg.window)
        v = fm.measure_pst(sig, cfg)
        out.append(Check(f"Pst=1 {shape} {label}", abs(v - 1) <= PST_TOLERANCE, f"Pst {v:.4f} at {depth:.4g} %"))
    return out


def run_all(weighting: dict | None = None, input_rate: float = 20_000.0) -> list[Check]:
    return (
        check_thd()
        + check_weighting(input_rate, weighting)
        + check_classifier()
        + check_pinst_tables(input_rate, weighting)
        + check_pst_rows(input_rate, weighting=weighting)
    )
