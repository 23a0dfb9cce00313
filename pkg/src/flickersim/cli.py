"""Command-line driver: ``flickersim {measure,sweep,validate}``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import conformance
from .flickermeter import PST_FLOOR, write_p_inst_csv
from .signals import CarrierSpec, ModulatingSpec, SignalBuffer
from .sweep import ChainConfig, PlanError, SweepPlan, load_plan, run_sweep, stream_point, write_outputs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("flickersim")


class UsageError(Exception):
    pass


def bundled_plan(name: str) -> Path | None:
    stem = name[:-5] if name.endswith(".plan") else name
    ref = resources.files("flickersim") / "plans" / f"{stem}.plan"
    return Path(str(ref)) if ref.is_file() else None


def _plan_path(arg: str) -> Path:
    p = Path(arg)
    if p.is_file():
        return p
    bundled = bundled_plan(arg)
    if bundled is None:
        raise UsageError(f"plan: no such file or bundled plan {arg!r}")
    return bundled


def _out_dir(arg: str) -> Path:
    out = Path(arg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {out}: {exc}") from exc
    return out


def cmd_measure(args) -> int:
    try:
        carrier = CarrierSpec(f_c=args.fc, U_c=args.uc, m_c=args.mc)
        mod = ModulatingSpec(args.shape, args.fm, args.depth, args.phase)
        settle, measure = (600.0, 600.0) if args.full_protocol else (args.settle, args.window)
        plan = SweepPlan(
            (carrier,), (mod.shape,), (mod.f_m,), (mod.depth,),
            settle=settle, measure=measure,
            chain=ChainConfig(sample_rate=args.fs, decimation=args.decimation),
            run_id="measure",
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    meter = stream_point(carrier, mod, plan)
    pst = meter.pst()
    ch = plan.chain
    print(f"Pst = {pst:.6f}")
    print(f"below_floor = {pst < PST_FLOOR} (floor {PST_FLOOR:g})")
    print(
        f"chain: synthesis {ch.sample_rate:g} Hz, FIR order {ch.fir_order} cutoff {ch.cutoff:g} Hz, "
        f"decimation {ch.decimation} -> meter {ch.meter_rate:g} Hz, classifier {plan.classifier_rate:g} Hz, "
        f"settle {plan.settle:g} s, window {plan.measure:g} s"
    )
    if args.dump_pinst:
        out = _out_dir(args.out)
        trace = SignalBuffer(meter.p_inst(), plan.classifier_rate, unit="1")
        path = out / "p_inst.csv"
        write_p_inst_csv(trace, path)
        print(f"P_inst trace written to {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = _plan_path(args.plan)
    try:
        plan = load_plan(path)
        if args.full_protocol:
            plan = plan.full_protocol()
        if args.window is not None:
            plan = replace(plan, measure=args.window)
        if args.settle is not None:
            plan = replace(plan, settle=args.settle)
        if args.no_timing:
            plan = replace(plan, record_timing=False)
    except (PlanError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if args.workers < 1:
        raise UsageError("--workers: must be >= 1")
    out = _out_dir(args.out)
    ckpt = out / f"{plan.run_id}.checkpoint.jsonl"
    total = len(plan.cells())
    count = [0]

    def progress(rec):
        count[0] += 1
        log.info("[%d/%d] m_c=%g %s f_m=%g depth=%g -> Pst %.4f", count[0], total, rec.m_c, rec.shape, rec.f_m, rec.depth, rec.pst)

    try:
        result = run_sweep(plan, workers=args.workers, checkpoint=ckpt, progress=progress)
    except KeyboardInterrupt:
        print(f"interrupted; finished points are kept in {ckpt}", file=sys.stderr)
        return EXIT_FAIL
    except PlanError as exc:
        raise UsageError(str(exc)) from exc
    paths = write_outputs(result, plan, out)
    print(f"{len(result.records)} points -> {paths['csv']}")
    print(f"summary -> {paths['summary']}")
    print(f"{len(paths['plots'])} charts in {out}")
    if result.failures:
        print(f"{len(result.failures)} points failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_validate(args) -> int:
    weighting = {}
    for item in args.perturb or []:
        name, _, value = item.partition("=")
        if name not in ("k", "lam", "w1", "w2", "w3", "w4") or not value:
            raise UsageError(f"--perturb: expected NAME=VALUE with NAME in k, lam, w1..w4, got {item!r}")
        try:
            weighting[name] = float(value)
        except ValueError as exc:
            raise UsageError(f"--perturb: {exc}") from exc
    checks = conformance.run_all(weighting or None)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flickersim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="Pst of one test signal")
    m.add_argument("--mc", type=float, default=1.0, help="clipping level m_c in (0, 1]")
    m.add_argument("--shape", default="sin", help="sin | tri | trap | rect")
    m.add_argument("--fm", type=float, default=8.8, help="modulating frequency [Hz]")
    m.add_argument("--depth", type=float, default=1.0, help="modulation depth dU/U [%%]")
    m.add_argument("--phase", type=float, default=0.0, help="modulating phase, fraction of T_m")
    m.add_argument("--fc", type=float, default=50.0)
    m.add_argument("--uc", type=float, default=230.0)
    m.add_argument("--fs", type=float, default=80_000.0, help="synthesis rate [Hz]")
    m.add_argument("--decimation", type=int, default=4)
    m.add_argument("--settle", type=float, default=30.0)
    m.add_argument("--window", type=float, default=600.0, help="Pst window [s]")
    m.add_argument("--paper-protocol", dest="full_protocol", action="store_true", help="600 s discarded + 600 s measured")
    m.add_argument("--dump-pinst", action="store_true", help="write p_inst.csv to --out")
    m.add_argument("--out", default=".")
    m.set_defaults(func=cmd_measure)

    s = sub.add_parser("sweep", help="run a plan file (path or bundled name such as fig3)")
    s.add_argument("plan")
    s.add_argument("--out", default="results")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--paper-protocol", dest="full_protocol", action="store_true")
    s.add_argument("--window", type=float, default=None, help="override the measured window [s]")
    s.add_argument("--settle", type=float, default=None)
    s.add_argument("--no-timing", action="store_true", help="write wall_time_s as 0 for byte-stable CSVs")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="built-in conformance checks")
    v.add_argument("--perturb", action="append", metavar="NAME=VALUE", help="override a weighting constant")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"flickersim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
