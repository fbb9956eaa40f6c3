"""Command-line entry point.

Exit codes: 0 ok, 2 invalid config, 3 FOM divergence, 4 ROM divergence,
5 incomplete bundle, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .errors import RomError
from .pipeline import Bundle, load_config, load_plan, offline_run, online_run, report_timings, validate
from .pipeline.config import parse_mu
from .rom_fe import NewtonSettings


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return "-" if v is None else str(v)


def _table(rows: list[dict], out=None):
    if not rows:
        return
    out = out or sys.stdout
    cols = list(rows[0])
    cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)), file=out)
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)), file=out)


def cmd_offline(args) -> int:
    cfg = load_config(args.config)
    out = offline_run(cfg, args.output)
    b = Bundle(out)
    print(f"bundle written to {out}")
    print(json.dumps(b.manifest.get("counts", {}), sort_keys=True))
    return 0


def _newton(bundle: Bundle, newton_max):
    if newton_max is None:
        return None
    return NewtonSettings(bundle.config.newton.tol, newton_max)


def cmd_online(args) -> int:
    b = Bundle(args.bundle)
    res = online_run(b, parse_mu(args.mu), args.variant, truth=args.truth, n_use=args.n,
                     newton=_newton(b, args.newton_max))
    print(json.dumps({k: v for k, v in res.row.items()}, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    b = Bundle(args.bundle)
    report = validate(b, load_plan(args.plan), newton=_newton(b, args.newton_max))
    _table(report.summary)
    print(f"reports: {', '.join(report.files)} in {b.reports_dir()}")
    return 0


def cmd_info(args) -> int:
    from .service.app import energy_table

    b = Bundle(args.bundle)
    energy = energy_table(b)
    if energy:
        print("cumulative energy")
        _table(energy)
    print("manifest")
    print(json.dumps(b.manifest, indent=2, sort_keys=True))
    timings = report_timings(b)
    if timings:
        print("timings")
        print(json.dumps(timings, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="romforge", description="Reduced-order models for steady parameterized flow")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="solve the FOM on the training set and build a bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="bundle directory (default: study.output or study.name)")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="solve the reduced system at one parameter")
    p.add_argument("--bundle", required=True)
    p.add_argument("--mu", required=True, help="comma-separated parameter values")
    p.add_argument("--variant", required=True)
    p.add_argument("--truth", action="store_true", help="also solve the FOM and report relative errors")
    p.add_argument("--n", type=int, help="use the first N greedy samples (cavity only)")
    p.add_argument("--newton-max", type=int)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("validate", help="compare every variant against the FOM on held-out samples")
    p.add_argument("--bundle", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--newton-max", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("info", help="print cumulative energy, manifest and timings")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except RomError as exc:
        print(f"error [{exc.kind}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
