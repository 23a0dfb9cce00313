"""Stage I / stage II sweeps: test-signal grid -> front end -> flickermeter -> Pst table."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .flickermeter import PST_FLOOR, Flickermeter, FlickermeterConfig
from .frontend import StreamingFrontEnd, design_lowpass_fir
from .signals import SHAPES, CarrierSpec, ModulatingSpec, canonical_shape, test_signal

log = logging.getLogger(__name__)

CSV_HEADER = ["m_c", "shape", "f_m_hz", "depth_pct", "pst", "below_floor", "wall_time_s"]
STAGE1_DEPTHS = (1.0, 5.0, 10.0)
STAGE2_FREQUENCIES = (208.8, 1008.8)
STAGE2_DEPTHS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0)
FULL_PROTOCOL = {"settle": 600.0, "measure": 600.0}


class PlanError(ValueError):
    """Plan file or plan object violates the schema."""


def default_stage1_grid(n_low: int = 25) -> list[float]:
    """Log-spaced points in [0.01, 150] Hz, then 25 Hz steps offset by 8.8 Hz up to 1050 Hz."""
    low = np.geomspace(0.01, 150.0, n_low)
    high = np.arange(150.0, 1050.0, 25.0) + 8.8
    return [float(f"{f:.6g}") for f in np.concatenate([low, high])]


@dataclass(frozen=True)
class ChainConfig:
    sample_rate: float = 80_000.0
    fir_order: int = 200
    cutoff: float = 8_000.0
    decimation: int = 4

    @property
    def meter_rate(self) -> float:
        return self.sample_rate / self.decimation


@dataclass(frozen=True)
class SweepPlan:
    carriers: tuple[CarrierSpec, ...]
    shapes: tuple[str, ...]
    fm_grid: tuple[float, ...]
    depth_grid: tuple[float, ...]
    settle: float = 30.0
    measure: float = 600.0
    chain: ChainConfig = field(default_factory=ChainConfig)
    classifier_rate: float = 500.0
    normalization_time_constant: float = 60.0
    run_id: str = "sweep"
    stage: int = 0
    record_timing: bool = True
    chunk_seconds: float = 5.0

    def __post_init__(self):
        for name in ("carriers", "shapes", "fm_grid", "depth_grid"):
            if not getattr(self, name):
                raise PlanError(f"{name}: grid must not be empty")
        object.__setattr__(self, "shapes", tuple(canonical_shape(s) for s in self.shapes))
        if any(f <= 0 for f in self.fm_grid):
            raise PlanError("fm_grid: frequencies must be > 0")
        if any(d < 0 or d >= 200 for d in self.depth_grid):
            raise PlanError("depth_grid: depths must lie in [0, 200) percent")
        if self.measure <= 0 or self.settle < 0:
            raise PlanError("durations: need measure > 0 and settle >= 0")
        if self.chain.cutoff >= self.chain.meter_rate / 2:
            raise PlanError("chain: cutoff must stay below the post-decimation Nyquist frequency")

    @property
    def meter_config(self) -> FlickermeterConfig:
        return FlickermeterConfig(
            input_rate=self.chain.meter_rate,
            classifier_rate=self.classifier_rate,
            window=self.measure,
            settle=self.settle,
            normalization_time_constant=self.normalization_time_constant,
        )

    def cells(self) -> list[tuple[CarrierSpec, ModulatingSpec]]:
        """Grid points in canonical order: carrier, shape, f_m, depth."""
        return [
            (c, ModulatingSpec(s, f, d))
            for c in self.carriers
            for s in self.shapes
            for f in self.fm_grid
            for d in self.depth_grid
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["carriers"] = [asdict(c) for c in self.carriers]
        return d

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("record_timing")
        blob = json.dumps(d, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def full_protocol(self) -> "SweepPlan":
        """Two 10-minute intervals, the first discarded."""
        return replace(self, **FULL_PROTOCOL)


def _carrier(entry) -> CarrierSpec:
    if isinstance(entry, (int, float)):
        return CarrierSpec(m_c=float(entry))
    if isinstance(entry, dict):
        return CarrierSpec(**{k: float(v) for k, v in entry.items()})
    raise PlanError(f"carriers: cannot interpret {entry!r}")


def plan_from_dict(d: dict) -> SweepPlan:
    """Build a plan from the structured-text schema (see README)."""
    if not isinstance(d, dict):
        raise PlanError("plan must be a mapping")
    known = {"name", "run_id", "stage", "carriers", "shapes", "fm_grid", "depth_grid", "durations", "chain", "meter"}
    unknown = set(d) - known
    if unknown:
        raise PlanError(f"unknown plan keys: {sorted(unknown)}")
    stage = int(d.get("stage", 0))
    fm_grid = d.get("fm_grid")
    if fm_grid in (None, "stage1"):
        fm_grid = default_stage1_grid() if stage == 1 or fm_grid == "stage1" else None
    elif fm_grid == "stage2":
        fm_grid = list(STAGE2_FREQUENCIES)
    depth_grid = d.get("depth_grid")
    if depth_grid == "stage1":
        depth_grid = list(STAGE1_DEPTHS)
    elif depth_grid == "stage2":
        depth_grid = list(STAGE2_DEPTHS)
    durations = d.get("durations") or {}
    chain = d.get("chain") or {}
    meter = d.get("meter") or {}
    try:
        return SweepPlan(
            carriers=tuple(_carrier(c) for c in (d.get("carriers") or [])),
            shapes=tuple(d.get("shapes") or ()),
            fm_grid=tuple(float(f) for f in (fm_grid or [])),
            depth_grid=tuple(float(x) for x in (depth_grid or [])),
            settle=float(durations.get("settle", 30.0)),
            measure=float(durations.get("measure", 600.0)),
            chain=ChainConfig(**chain),
            classifier_rate=float(meter.get("classifier_rate", 500.0)),
            normalization_time_constant=float(meter.get("normalization_time_constant", 60.0)),
            run_id=str(d.get("run_id", d.get("name", "sweep"))),
            stage=stage,
        )
    except PlanError:
        raise
    except (TypeError, ValueError) as exc:
        raise PlanError(str(exc)) from exc


def load_plan(path) -> SweepPlan:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise PlanError(f"{path}: not parseable: {exc}") from exc
    return plan_from_dict(data)


# -- execution ----------------------------------------------------------------------


@dataclass
class PointRecord:
    m_c: float
    shape: str
    f_m: float
    depth: float
    pst: float
    below_floor: bool
    wall_time: float = 0.0
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (self.m_c, self.shape, self.f_m, self.depth)

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> list[str]:
        if self.ok:
            return [
                f"{self.m_c:.10g}",
                self.shape,
                f"{self.f_m:.10g}",
                f"{self.depth:.10g}",
                repr(float(self.pst)),
                str(int(self.below_floor)),
                f"{self.wall_time:.3f}",
            ]
        return [f"{self.m_c:.10g}", self.shape, f"{self.f_m:.10g}", f"{self.depth:.10g}", "nan", "", f"{self.wall_time:.3f}"]


def stream_point(carrier: CarrierSpec, mod: ModulatingSpec, plan: SweepPlan) -> Flickermeter:
    """Push settle + measure seconds of the test signal through front end and meter.

    Synthesis and filtering are streamed chunk by chunk; the returned meter
    holds the full P_inst record.
    """
    ch = plan.chain
    fir = design_lowpass_fir(ch.fir_order, ch.cutoff, ch.sample_rate)
    front = StreamingFrontEnd(fir, ch.decimation)
    meter = Flickermeter(plan.meter_config)
    # pad by one decimated sample per group-delay sample so the window is full
    total = int(round((plan.settle + plan.measure) * ch.sample_rate)) + fir.group_delay + ch.decimation
    step = max(1, int(plan.chunk_seconds * ch.sample_rate))
    for start in range(0, total, step):
        n = min(step, total - start)
        x = test_signal(carrier, mod, ch.sample_rate, start=start, count=n)
        meter.push(front.push(x.samples))
    return meter


def measure_point(carrier: CarrierSpec, mod: ModulatingSpec, plan: SweepPlan) -> float:
    return stream_point(carrier, mod, plan).pst()


def run_point(carrier: CarrierSpec, mod: ModulatingSpec, plan: SweepPlan) -> PointRecord:
    """Measure one point; failures are captured in the record, not raised."""
    t = time.perf_counter()
    try:
        pst = measure_point(carrier, mod, plan)
        err = None
    except Exception as exc:  # recorded per point, sweep continues
        log.warning("point m_c=%g %s f_m=%g depth=%g failed: %s", carrier.m_c, mod.shape, mod.f_m, mod.depth, exc)
        pst, err = math.nan, f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t if plan.record_timing else 0.0
    return PointRecord(
        carrier.m_c, mod.shape, mod.f_m, mod.depth, pst, bool(err is None and pst < PST_FLOOR), wall, err
    )


def _run_cell(args):
    carrier, mod, plan = args
    return run_point(carrier, mod, plan)


@dataclass
class SweepResult:
    records: list[PointRecord]
    plan_fingerprint: str
    metadata: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[PointRecord]:
        return [r for r in self.records if not r.ok]

    def lookup(self) -> dict[tuple, PointRecord]:
        return {r.key: r for r in self.records}

    def pst(self, m_c, shape, f_m, depth) -> float:
        return self.lookup()[(m_c, canonical_shape(shape), f_m, depth)].pst

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow(r.csv_row())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, fingerprint: str = "") -> "SweepResult":
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                pst = float(row["pst"])
                records.append(
                    PointRecord(
                        float(row["m_c"]),
                        row["shape"],
                        float(row["f_m_hz"]),
                        float(row["depth_pct"]),
                        pst,
                        row["below_floor"] == "1",
                        float(row["wall_time_s"]),
                        None if not math.isnan(pst) else "failed",
                    )
                )
        return cls(records, fingerprint)


def _metadata() -> dict:
    return {
        "flickersim": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


class Checkpoint:
    """Append-only JSON-lines store of finished points, keyed to a plan fingerprint."""

    def __init__(self, path, fingerprint: str):
        self.path = Path(path)
        self.fingerprint = fingerprint

    def load(self) -> dict[tuple, PointRecord]:
        if not self.path.exists():
            return {}
        done = {}
        with self.path.open() as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            return {}
        head = json.loads(lines[0])
        if head.get("fingerprint") != self.fingerprint:
            raise PlanError(f"{self.path}: checkpoint belongs to a different plan")
        for ln in lines[1:]:
            try:
                rec = PointRecord(**json.loads(ln))
            except (json.JSONDecodeError, TypeError):
                continue  # torn final line after an interruption
            if rec.ok:
                done[rec.key] = rec
        return done

    def append(self, rec: PointRecord) -> None:
        new = not self.path.exists() or self.path.stat().st_size == 0
        with self.path.open("a") as fh:
            if new:
                fh.write(json.dumps({"fingerprint": self.fingerprint}) + "\n")
            fh.write(json.dumps(asdict(rec)) + "\n")
            fh.flush()


def run_sweep(plan: SweepPlan, workers: int = 1, checkpoint=None, progress=None) -> SweepResult:
    """Evaluate every plan cell; rows come back in canonical grid order."""
    if workers < 1:
        raise ValueError("workers: must be >= 1")
    fp = plan.fingerprint()
    cells = plan.cells()
    ckpt = Checkpoint(checkpoint, fp) if checkpoint else None
    done = ckpt.load() if ckpt else {}
    pending = [(c, m) for c, m in cells if (c.m_c, m.shape, m.f_m, m.depth) not in done]
    log.info("%s: %d cells, %d cached, %d to run", plan.run_id, len(cells), len(done), len(pending))

    def sink(rec: PointRecord):
        done[rec.key] = rec
        if ckpt:
            ckpt.append(rec)
        if progress:
            progress(rec)

    if workers == 1 or len(pending) <= 1:
        for c, m in pending:
            sink(run_point(c, m, plan))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, (c, m, plan)) for c, m in pending]
            for fut in as_completed(futures):
                sink(fut.result())
    records = [done[(c.m_c, m.shape, m.f_m, m.depth)] for c, m in cells]
    return SweepResult(records, fp, _metadata())


def run_stage1(plan: SweepPlan, **kw) -> SweepResult:
    """Stage I: depths 1, 5 and 10 % across the f_m grid."""
    return run_sweep(replace(plan, depth_grid=STAGE1_DEPTHS, stage=1), **kw)


def run_stage2(plan: SweepPlan, **kw) -> SweepResult:
    """Stage II: f_m of 208.8 and 1008.8 Hz across the depth grid."""
    return run_sweep(replace(plan, fm_grid=STAGE2_FREQUENCIES, stage=2), **kw)


# -- analysis -------------------------------------------------------------------------

SHAPE_SEVERITY = ("rectangular", "trapezoidal", "sinusoidal", "triangular")


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def exceedance_bands(points, floor: float = PST_FLOOR) -> list[tuple[float, float]]:
    """Contiguous runs of grid frequencies whose Pst is at or above ``floor``."""
    bands = []
    run = None
    for f, p in sorted(points):
        if p >= floor:
            run = [f, f] if run is None else [run[0], f]
        elif run is not None:
            bands.append(tuple(run))
            run = None
    if run is not None:
        bands.append(tuple(run))
    return bands


@dataclass
class Summary:
    frequency_curves: dict = field(default_factory=dict)
    depth_curves: dict = field(default_factory=dict)
    ordering: list = field(default_factory=list)
    linearity: list = field(default_factory=list)
    bands: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def ordering_violations(self, rel_tol: float = 0.0) -> list[dict]:
        return [o for o in self.ordering if o["worst_rel_gap"] > rel_tol]

    def highest_exceedance(self, m_c, shape, depth) -> float | None:
        b = self.bands.get((m_c, shape, depth))
        return b[-1][1] if b else None

    def to_dict(self) -> dict:
        def k(t):
            return "|".join(f"{x:g}" if isinstance(x, float) else str(x) for x in t)

        return {
            "ordering": self.ordering,
            "linearity": self.linearity,
            "bands": {k(key): v for key, v in self.bands.items()},
            "failures": self.failures,
        }

    def to_text(self) -> str:
        lines = []
        if self.bands:
            lines.append("Exceedance bands (Pst >= %.2f)" % PST_FLOOR)
            for (m_c, shape, depth), bands in sorted(self.bands.items()):
                spans = ", ".join(f"{lo:g}-{hi:g}" for lo, hi in bands) or "none"
                lines.append(f"  m_c={m_c:g} {shape:<12} depth={depth:g}%: {spans}")
        if self.ordering:
            bad = self.ordering_violations()
            lines.append(f"Shape ordering rect >= trap >= sin >= tri: {len(self.ordering) - len(bad)}/{len(self.ordering)} points hold")
            for o in bad:
                lines.append(f"  m_c={o['m_c']:g} f_m={o['f_m']:g} depth={o['depth']:g}: worst gap {o['worst_rel_gap']:.2%}")
        if self.linearity:
            lines.append("Depth fits (above-floor points)")
            lines.append("  m_c  shape         f_m      slope      intercept  R2      increasing")
            for row in self.linearity:
                lines.append(
                    f"  {row['m_c']:<4g} {row['shape']:<12} {row['f_m']:<8g} {row['slope']:<10.5g} "
                    f"{row['intercept']:<10.4g} {row['r2']:<7.4f} {row['increasing']}"
                )
        if self.failures:
            lines.append(f"Failed points: {len(self.failures)}")
            for f in self.failures:
                lines.append(f"  {f}")
        return "\n".join(lines) + "\n"


def summarize(result: SweepResult, floor: float = PST_FLOOR) -> Summary:
    """Curves, shape-ordering checks, depth linearity fits and exceedance bands."""
    ok = [r for r in result.records if r.ok]
    s = Summary(failures=[f"m_c={r.m_c:g} {r.shape} f_m={r.f_m:g} depth={r.depth:g}: {r.error}" for r in result.failures])
    fgroups: dict = {}
    dgroups: dict = {}
    for r in ok:
        fgroups.setdefault((r.m_c, r.shape, r.depth), []).append((r.f_m, r.pst))
        dgroups.setdefault((r.m_c, r.shape, r.f_m), []).append((r.depth, r.pst))
    for key, pts in fgroups.items():
        pts.sort()
        if len(pts) > 1:
            s.frequency_curves[key] = pts
            s.bands[key] = exceedance_bands(pts, floor)
    for key, pts in dgroups.items():
        pts.sort()
        if len(pts) > 1:
            s.depth_curves[key] = pts
            above = [(d, p) for d, p in pts if p >= floor]
            slope, icpt, r2 = linear_fit(*zip(*above)) if len(above) >= 2 else (math.nan,) * 3
            increasing = all(b[1] > a[1] for a, b in zip(pts, pts[1:]))
            s.linearity.append(
                {"m_c": key[0], "shape": key[1], "f_m": key[2], "slope": slope, "intercept": icpt,
                 "r2": r2, "n_above": len(above), "increasing": increasing}
            )
    by_point: dict = {}
    for r in ok:
        by_point.setdefault((r.m_c, r.f_m, r.depth), {})[r.shape] = r.pst
    for (m_c, f_m, depth), vals in sorted(by_point.items()):
        if not all(sh in vals for sh in SHAPE_SEVERITY):
            continue
        if any(vals[sh] < floor for sh in SHAPE_SEVERITY):
            continue
        gaps = [
            max(0.0, (vals[lo] - vals[hi]) / vals[hi])
            for hi, lo in zip(SHAPE_SEVERITY, SHAPE_SEVERITY[1:])
        ]
        s.ordering.append(
            {"m_c": m_c, "f_m": f_m, "depth": depth, "pst": dict(vals), "worst_rel_gap": max(gaps)}
        )
    return s


def write_outputs(result: SweepResult, plan: SweepPlan, out_dir) -> dict[str, Path]:
    """CSV, summary (text + JSON) and SVG charts under ``out_dir``."""
    from .plots import write_plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{plan.run_id}.csv", "summary": out / f"{plan.run_id}_summary.txt",
             "json": out / f"{plan.run_id}_summary.json"}
    result.to_csv(paths["csv"])
    summary = summarize(result)
    paths["summary"].write_text(summary.to_text())
    meta = {"plan": plan.to_dict(), "fingerprint": result.plan_fingerprint, "metadata": result.metadata,
            "summary": summary.to_dict()}
    paths["json"].write_text(json.dumps(meta, indent=2, sort_keys=True, default=float))
    paths["plots"] = write_plots(summary, out, plan.run_id)
    return paths


__all__ = [
    "SHAPES",
    "ChainConfig",
    "SweepPlan",
    "SweepResult",
    "PointRecord",
    "PlanError",
    "load_plan",
    "plan_from_dict",
    "run_point",
    "run_sweep",
    "run_stage1",
    "run_stage2",
    "summarize",
]
