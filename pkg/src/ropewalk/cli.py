"""Command-line interface.

Subcommands: info, tighten, struts, contactmap, smoothbound, bench.
Exit codes: 0 success, 2 usage error, 3 validation/parse error, 4 numerical
failure — chosen so shell harnesses can tell bad invocations from bad
geometry from failed solves.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .links import GeometryError, PolyLink
from .contacts import DEFAULT_ACTIVE_TOL, strut_set, thickness
from .contactplot import PlotStyle, build_contact_plot, emit_svg, load_style
from .fileio import ParseError, parse_seed_spec, read_link, write_link, \
    write_step_log, write_struts_csv
from .rounding import RefinementError, smooth_ropelength_bound
from .tighten import (
    FeasibilityError,
    SolverError,
    TightenConfig,
    collect_active,
    solve_multipliers,
    tighten,
)
from .gradients import length_gradient

USAGE_EXIT = 2
VALIDATION_EXIT = 3
NUMERICAL_EXIT = 4

BENCH_TARGETS = {
    # name: (seed spec, known smooth minimum, allowed polygonal ropelength)
    "hopf": ("hopf:108", 8 * math.pi, 25.26),
    "chain": ("chain:128", 12 * math.pi + 4, 41.92),
    "borromean": ("borromean:210", 58.006, 58.32),
}


def _load_input(args) -> PolyLink:
    if getattr(args, "seed", None):
        return parse_seed_spec(args.seed)
    if not args.link_file:
        raise argparse.ArgumentTypeError("need a link file or --seed")
    return read_link(args.link_file)


def _solved_struts(link: PolyLink, delta: float):
    """Struts with multipliers from a one-shot solve at the current shape.

    The active threshold is the configuration's own thickness, so this
    reports the forces that would hold the shape if it were tight.
    """
    rep = thickness(link)
    cfg = TightenConfig(tau=rep.pthi, active_tol=delta,
                        feas_tol=max(1e-9 * rep.pthi, 1e-12))
    active = collect_active(link, cfg)
    lam, _, _ = solve_multipliers(active, -length_gradient(link))
    return rep, active.with_multipliers(lam).solved_struts()


def cmd_info(args) -> int:
    link = _load_input(args)
    rep = thickness(link)
    struts = strut_set(link, rep, delta=args.delta)
    if rep.governing[0] == "kink":
        governing = {"kind": "kink", "component": rep.governing[1],
                     "vertex": rep.governing[2]}
    else:
        s = rep.governing[1]
        governing = {"kind": "strut",
                     "endpoint_a": [s.comp_a, s.edge_a, s.u],
                     "endpoint_b": [s.comp_b, s.edge_b, s.v]}
    if args.json:
        print(json.dumps({
            "components": len(link.components),
            "vertices": link.num_vertices,
            "total_length": rep.total_length,
            "pthi": rep.pthi,
            "prop": rep.prop,
            "min_minrad": rep.min_minrad,
            "min_strut_halfdist": rep.min_strut_halfdist,
            "governing": governing,
            "strut_count": len(struts),
            "delta": args.delta,
        }, indent=2, sort_keys=True))
    else:
        print(f"components          {len(link.components)}")
        print(f"vertices            {link.num_vertices}")
        print(f"total length        {rep.total_length:.6f}")
        print(f"PThi                {rep.pthi:.6f}")
        print(f"PRop                {rep.prop:.4f}")
        print(f"min MinRad          {rep.min_minrad:.6f}")
        print(f"min strut half-dist {rep.min_strut_halfdist:.6f}")
        print(f"governing           {governing}")
        print(f"struts at delta     {len(struts)} (delta={args.delta:g})")
    return 0


def cmd_tighten(args) -> int:
    link = _load_input(args)
    cfg = TightenConfig(
        tau=args.tau,
        active_tol=args.delta,
        max_steps=args.max_steps,
        grad_tol=args.grad_tol,
        resample_every=args.resample_every,
    )
    t0 = time.perf_counter()
    final, rep, reports, _active = tighten(link, cfg)
    dt = time.perf_counter() - t0
    if args.out:
        write_link(final, args.out)
    if args.log:
        write_step_log(reports, args.log)
    accepted = sum(1 for r in reports if r.accepted)
    print(f"steps               {len(reports)} ({accepted} accepted, {dt:.1f}s)")
    print(f"final length        {rep.total_length:.6f}")
    print(f"final PThi          {rep.pthi:.6f}")
    print(f"final PRop          {rep.prop:.4f}")
    if args.smooth_bound:
        bound = smooth_ropelength_bound(final)
        print(f"smooth bound        {bound:.4f}")
    return 0


def cmd_struts(args) -> int:
    link = _load_input(args)
    rep, struts = _solved_struts(link, args.delta)
    if args.out:
        write_struts_csv(struts, args.out)
        print(f"wrote {len(struts)} struts to {args.out}")
    else:
        from .fileio import STRUT_CSV_HEADER
        print(STRUT_CSV_HEADER)
        for s in struts:
            lam = "" if s.multiplier is None else repr(s.multiplier)
            print(f"{s.comp_a},{s.edge_a},{s.u!r},{s.comp_b},{s.edge_b},"
                  f"{s.v!r},{s.chord!r},{lam}")
    return 0


def cmd_contactmap(args) -> int:
    link = _load_input(args)
    _rep, struts = _solved_struts(link, args.delta)
    style_path = args.style or os.environ.get("ROPEWALK_STYLE")
    style = load_style(style_path) if style_path else PlotStyle()
    plot = build_contact_plot(link, struts)
    data = emit_svg(plot, style)
    with open(args.out, "wb") as fh:
        fh.write(data)
    print(f"wrote {len(plot.boxes)} boxes to {args.out}")
    return 0


def cmd_smoothbound(args) -> int:
    link = _load_input(args)
    rep = thickness(link)
    bound = smooth_ropelength_bound(link)
    print(f"PRop                {rep.prop:.4f}")
    print(f"smooth bound        {bound:.4f}")
    return 0


def cmd_bench(args) -> int:
    names = ["hopf"] if args.quick else ["hopf", "chain"]
    if args.borromean:
        names.append("borromean")
    failed = False
    for name in names:
        spec, known, allowed = BENCH_TARGETS[name]
        link = parse_seed_spec(spec)
        cfg = TightenConfig(max_steps=args.max_steps)
        t0 = time.perf_counter()
        final, rep, _reports, _active = tighten(link, cfg)
        dt = time.perf_counter() - t0
        rel = (rep.prop - known) / known
        ok = rep.prop <= allowed
        failed |= not ok
        print(f"{name:10s} edges={final.num_edges:4d} PRop={rep.prop:9.4f} "
              f"known={known:9.4f} rel_err={100 * rel:+.3f}% "
              f"[{'ok' if ok else 'FAIL'}] ({dt:.1f}s)")
    return 0 if not failed else NUMERICAL_EXIT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ropewalk",
        description="Thickness, ropelength and self-contact sets of polygonal "
                    "knots and links.")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker cap (computations are sequential and "
                         "bit-reproducible at 1, the default)")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_input(p, with_seed=True):
        p.add_argument("link_file", nargs="?", help="POLYLINK 1 geometry file")
        if with_seed:
            p.add_argument("--seed", help="seed spec such as hopf:108 or "
                                          "torus_knot:2,3,400")

    p = sub.add_parser("info", help="report length, thickness and ropelength")
    add_input(p)
    p.add_argument("--delta", type=float, default=DEFAULT_ACTIVE_TOL)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("tighten", help="minimize length at fixed thickness")
    add_input(p)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=DEFAULT_ACTIVE_TOL)
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--grad-tol", type=float, default=1e-4)
    p.add_argument("--resample-every", type=int, default=50)
    p.add_argument("--out", help="write the final configuration here")
    p.add_argument("--log", help="write a step-log CSV here")
    p.add_argument("--smooth-bound", action="store_true",
                   help="also print the rounded-curve ropelength bound")
    p.set_defaults(func=cmd_tighten)

    p = sub.add_parser("struts", help="export the strut set with contact forces")
    add_input(p)
    p.add_argument("--delta", type=float, default=DEFAULT_ACTIVE_TOL)
    p.add_argument("--out", help="CSV output path (default: print)")
    p.set_defaults(func=cmd_struts)

    p = sub.add_parser("contactmap", help="render the self-contact plot as SVG")
    add_input(p)
    p.add_argument("--delta", type=float, default=DEFAULT_ACTIVE_TOL)
    p.add_argument("--out", required=True, help="SVG output path")
    p.add_argument("--style", help="key=value style file "
                                   "(default: $ROPEWALK_STYLE if set)")
    p.set_defaults(func=cmd_contactmap)

    p = sub.add_parser("smoothbound",
                       help="print polygonal ropelength and the smooth bound")
    add_input(p)
    p.set_defaults(func=cmd_smoothbound)

    p = sub.add_parser("bench",
                       help="tighten reference links and compare with known minima")
    p.add_argument("--quick", action="store_true", help="first link only")
    p.add_argument("--borromean", action="store_true",
                   help="include the three-ring link (slow)")
    p.add_argument("--max-steps", type=int, default=1000)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    if args.threads < 1:
        parser.exit_on_error = False
        print("error: --threads must be >= 1", file=sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args)
    except (ParseError, GeometryError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_EXIT
    except (SolverError, FeasibilityError, RefinementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
