"""Command line front end.

Subcommands: simulate (one leg of the configured model), sweep (grids of
hbar and optionally eps), observe (observation inequality), check (smoke
checks, optionally with an injected fault).  Every run writes delimited
series, a manifest, and rendered figures under --out.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

from ..errors import MlslError
from ..model import config_from_file, parse_config
from .observe import run_observation
from .outputs import emit_outputs
from .selfcheck import FAULT_NAMES, self_check
from .sweeps import run_double_limit_sweep, run_single_limit_sweep

__all__ = ["main"]


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats: {text!r}")


def _add_common(p):
    p.add_argument("--config", required=True, help="INI run description")
    p.add_argument("--out", default="mlsl_out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=None, help="override config threads")


def _load(args):
    cfg = config_from_file(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        over["threads"] = args.threads
    return dataclasses.replace(cfg, **over) if over else cfg


def _print_reports(reports):
    for r in reports:
        worst = r.worst_relative_margin()
        verdict = "ok" if worst >= -0.03 else "VIOLATED"
        print(f"{r.label}: worst relative margin {worst:+.3%} [{verdict}]")


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    t0 = time.monotonic()
    if cfg.field.kind == "eps_rotation":
        reports = run_double_limit_sweep(cfg, [cfg.field.eps], [cfg.hbar])
    else:
        reports = run_single_limit_sweep(cfg, [cfg.hbar])
    emit_outputs(args.out, cfg, reports, wall_time_s=time.monotonic() - t0)
    _print_reports(reports)
    print(f"outputs in {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    t0 = time.monotonic()
    if args.eps:
        reports = run_double_limit_sweep(cfg, args.eps, args.hbar)
    else:
        reports = run_single_limit_sweep(cfg, args.hbar)
    emit_outputs(args.out, cfg, reports, wall_time_s=time.monotonic() - t0)
    _print_reports(reports)
    print(f"outputs in {args.out}")
    return 0


def _cmd_observe(args) -> int:
    cfg = _load(args)
    t0 = time.monotonic()
    report = run_observation(cfg)
    emit_outputs(args.out, cfg, observation=report,
                 wall_time_s=time.monotonic() - t0)
    print(f"gc={report.gc_satisfied} c_geo={report.c_geo:.4f} "
          f"delta={report.delta:.4g} c_obs={report.c_obs:.4f} "
          f"observed={report.observed_integral:.4f} "
          f"holds={report.inequality_holds}")
    print(f"outputs in {args.out}")
    return 0


def _cmd_check(args) -> int:
    results = self_check(inject_fault=args.fault)
    failed = 0
    for r in results:
        mark = " ok " if r.ok else "FAIL"
        print(f"[{mark}] {r.name}: {r.detail}")
        failed += 0 if r.ok else 1
    if args.fault:
        print(f"(fault injected: {args.fault}; failures above are expected)")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mlsl",
        description="magnetic semiclassics laboratory: flow vs mixture, "
                    "envelopes, observation inequality")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one leg at the configured hbar/eps")
    _add_common(p)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("sweep", help="hbar (and optional eps) grid")
    _add_common(p)
    p.add_argument("--hbar", type=_floats, required=True,
                   help="comma-separated hbar values")
    p.add_argument("--eps", type=_floats, default=None,
                   help="comma-separated eps values (rotation field only)")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("observe", help="observation inequality run")
    _add_common(p)
    p.set_defaults(fn=_cmd_observe)

    p = sub.add_parser("check", help="fast end-to-end smoke checks")
    p.add_argument("--fault", choices=FAULT_NAMES, default=None,
                   help="inject a deliberate defect; checks must notice")
    p.set_defaults(fn=_cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MlslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
