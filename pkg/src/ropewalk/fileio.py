"""Link geometry files, strut/step-log CSV export, and seed configurations.

The native format is a small line-oriented text file (see FORMATS.md):

    POLYLINK 1
    components <n>
    vertices <m>
    x y z            # one line per vertex, full precision
    ...

Components are implicitly closed.  Coordinates are written with ``repr``,
whose shortest round-trip decimals make read(write(link)) reproduce the
float64 values bit-exactly.  A read-only shim for Geomview-style VECT
polyline files is included for convenience; their components are assumed
closed.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .links import GeometryError, PolyLink
from .contacts import Strut

__all__ = [
    "ParseError",
    "read_link",
    "write_link",
    "read_vect",
    "seed",
    "write_struts_csv",
    "read_struts_csv",
    "write_step_log",
]

STRUT_CSV_HEADER = "compA,edgeA,u,compB,edgeB,v,chord,lambda"


class ParseError(ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def _content_lines(text: str):
    """(lineno, stripped content) pairs with comments and blanks removed."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_link(path) -> PolyLink:
    path = Path(path)
    lines = list(_content_lines(path.read_text()))
    pos = 0

    def expect(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise ParseError(path, last + 1, f"unexpected end of file, expected {what}")
        out = lines[pos]
        pos += 1
        return out

    lineno, header = expect("header 'POLYLINK 1'")
    if header != "POLYLINK 1":
        raise ParseError(path, lineno, f"bad header {header!r}, expected 'POLYLINK 1'")
    lineno, comp_line = expect("'components <n>'")
    parts = comp_line.split()
    if len(parts) != 2 or parts[0] != "components":
        raise ParseError(path, lineno, f"expected 'components <n>', got {comp_line!r}")
    try:
        ncomp = int(parts[1])
    except ValueError:
        raise ParseError(path, lineno, f"bad component count {parts[1]!r}") from None
    if ncomp < 1:
        raise ParseError(path, lineno, "need at least one component")

    comps = []
    for _ in range(ncomp):
        lineno, vline = expect("'vertices <m>'")
        parts = vline.split()
        if len(parts) != 2 or parts[0] != "vertices":
            raise ParseError(path, lineno, f"expected 'vertices <m>', got {vline!r}")
        try:
            nv = int(parts[1])
        except ValueError:
            raise ParseError(path, lineno, f"bad vertex count {parts[1]!r}") from None
        if nv < 3:
            raise ParseError(path, lineno, f"component needs >= 3 vertices, got {nv}")
        rows = np.empty((nv, 3))
        for k in range(nv):
            lineno, cline = expect("vertex coordinates")
            fields = cline.split()
            if len(fields) != 3:
                raise ParseError(path, lineno,
                                 f"expected 3 coordinates, got {len(fields)}")
            try:
                rows[k] = [float(f) for f in fields]
            except ValueError:
                raise ParseError(path, lineno, f"bad coordinate in {cline!r}") from None
            if not np.all(np.isfinite(rows[k])):
                raise ParseError(path, lineno, f"non-finite coordinate in {cline!r}")
        comps.append(rows)
    if pos != len(lines):
        raise ParseError(path, lines[pos][0], "trailing content after last component")
    try:
        return PolyLink(comps)
    except GeometryError as exc:
        raise ParseError(path, lines[-1][0], str(exc)) from exc


def write_link(link: PolyLink, path) -> None:
    out = ["POLYLINK 1", f"components {len(link.components)}"]
    for c in link.components:
        out.append(f"vertices {len(c)}")
        out.extend(f"{x!r} {y!r} {z!r}" for x, y, z in c.vertices)
    Path(path).write_text("\n".join(out) + "\n")


def read_vect(path) -> PolyLink:
    """Geomview VECT import (read-only); every polyline is taken as closed.

    A closing vertex equal to the first is dropped, and negative vertex
    counts (the VECT closed-polyline convention) are accepted.
    """
    path = Path(path)
    tokens: list[tuple[int, str]] = []
    for lineno, line in _content_lines(path.read_text()):
        tokens.extend((lineno, t) for t in line.split())
    pos = 0

    def tok(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 0
            raise ParseError(path, last, f"unexpected end of file, expected {what}")
        out = tokens[pos]
        pos += 1
        return out

    lineno, magic = tok("VECT magic")
    if magic != "VECT":
        raise ParseError(path, lineno, f"bad magic {magic!r}, expected 'VECT'")

    def intval(what):
        lineno, t = tok(what)
        try:
            return lineno, int(t)
        except ValueError:
            raise ParseError(path, lineno, f"bad {what}: {t!r}") from None

    _, npoly = intval("polyline count")
    _, nvert = intval("vertex count")
    _, _ncol = intval("color count")
    counts = []
    for _ in range(npoly):
        lineno, n = intval("per-polyline vertex count")
        counts.append(abs(n))
    for _ in range(npoly):
        intval("per-polyline color count")
    if sum(counts) != nvert:
        raise ParseError(path, tokens[min(pos, len(tokens) - 1)][0],
                         f"vertex counts {counts} do not sum to {nvert}")
    comps = []
    for n in counts:
        rows = np.empty((n, 3))
        for k in range(n):
            for ax in range(3):
                lineno, t = tok("coordinate")
                try:
                    rows[k, ax] = float(t)
                except ValueError:
                    raise ParseError(path, lineno, f"bad coordinate {t!r}") from None
        if n > 3 and np.array_equal(rows[0], rows[-1]):
            rows = rows[:-1]
        comps.append(rows)
    try:
        return PolyLink(comps)
    except GeometryError as exc:
        raise ParseError(path, tokens[-1][0], str(exc)) from exc


# ---------------------------------------------------------------------------
# Seed configurations
# ---------------------------------------------------------------------------

def _ring(n: int, radius: float, center, plane: str, phase: float = 0.0) -> np.ndarray:
    """Regular n-gon of given circumradius in an axis plane."""
    t = 2.0 * np.pi * np.arange(n) / n + phase
    c, s = radius * np.cos(t), radius * np.sin(t)
    zero = np.zeros(n)
    axes = {"xy": (c, s, zero), "xz": (c, zero, s), "yz": (zero, c, s)}
    pts = np.stack(axes[plane], axis=1)
    return pts + np.asarray(center, dtype=float)


def seed(kind: str, *params) -> PolyLink:
    """Standard start configurations for the tightener.

    kinds:
      circle(n, R=1)            regular n-gon
      torus_knot(p, q, n, R=2, r=1)  (p, q) curve on a torus, gcd(p, q) = 1
      hopf(n_per_comp)          two unit rings in perpendicular planes, each
                                through the other's center
      chain(n_per_comp)         three unit rings along the x-axis in
                                alternating planes, spaced 1.5 apart
      borromean(n_per_comp)     three (2, 1) ellipses in the coordinate planes
    """
    if kind == "circle":
        n = int(params[0])
        R = float(params[1]) if len(params) > 1 else 1.0
        return PolyLink([_ring(n, R, (0, 0, 0), "xy")])

    if kind == "torus_knot":
        p, q, n = int(params[0]), int(params[1]), int(params[2])
        R = float(params[3]) if len(params) > 3 else 2.0
        r = float(params[4]) if len(params) > 4 else 1.0
        if math.gcd(p, q) != 1:
            raise ValueError(f"torus knot needs coprime (p, q), got ({p}, {q})")
        t = 2.0 * np.pi * np.arange(n) / n
        ring = R + r * np.cos(q * t)
        pts = np.stack([ring * np.cos(p * t), ring * np.sin(p * t),
                        r * np.sin(q * t)], axis=1)
        return PolyLink([pts])

    if kind == "hopf":
        n = int(params[0])
        return PolyLink([
            _ring(n, 1.0, (0, 0, 0), "xy"),
            # Phase pi puts a vertex exactly at the first ring's center.
            _ring(n, 1.0, (1, 0, 0), "xz", phase=np.pi),
        ])

    if kind == "chain":
        n = int(params[0])
        # Unit rings through each other's centers would make the two end
        # rings touch; 1.5 spacing keeps the seed embedded and linked.
        return PolyLink([
            _ring(n, 1.0, (0, 0, 0), "xy"),
            _ring(n, 1.0, (1.5, 0, 0), "xz", phase=np.pi),
            _ring(n, 1.0, (3.0, 0, 0), "xy", phase=np.pi),
        ])

    if kind == "borromean":
        n = int(params[0])
        t = 2.0 * np.pi * np.arange(n) / n
        two, one = 2.0 * np.cos(t), np.sin(t)
        zero = np.zeros(n)
        return PolyLink([
            np.stack([two, one, zero], axis=1),
            np.stack([zero, two, one], axis=1),
            np.stack([one, zero, two], axis=1),
        ])

    raise ValueError(f"unknown seed kind {kind!r}")


def parse_seed_spec(spec: str) -> PolyLink:
    """Build a seed from a CLI-style spec like ``hopf:108`` or
    ``torus_knot:2,3,400``."""
    kind, _, rest = spec.partition(":")
    args = []
    if rest:
        for piece in rest.split(","):
            args.append(float(piece) if ("." in piece or "e" in piece) else int(piece))
    return seed(kind, *args)


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_struts_csv(struts: Iterable[Strut], path) -> None:
    """One row per strut, lexicographic order, full-precision decimals;
    the lambda column is empty for unsolved struts."""
    rows = [STRUT_CSV_HEADER]
    for s in sorted(struts, key=lambda s: s.key):
        lam = "" if s.multiplier is None else _fmt(s.multiplier)
        rows.append(
            f"{s.comp_a},{s.edge_a},{_fmt(s.u)},{s.comp_b},{s.edge_b},"
            f"{_fmt(s.v)},{_fmt(s.chord)},{lam}")
    Path(path).write_text("\n".join(rows) + "\n")


def read_struts_csv(path) -> list[Strut]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != STRUT_CSV_HEADER:
        raise ParseError(path, 1, "bad or missing strut CSV header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        f = line.split(",")
        if len(f) != 8:
            raise ParseError(path, lineno, f"expected 8 fields, got {len(f)}")
        try:
            out.append(Strut(
                comp_a=int(f[0]), edge_a=int(f[1]), u=float(f[2]),
                comp_b=int(f[3]), edge_b=int(f[4]), v=float(f[5]),
                chord=float(f[6]),
                multiplier=float(f[7]) if f[7] else None,
            ))
        except ValueError:
            raise ParseError(path, lineno, f"bad field in {line!r}") from None
    return out


def write_step_log(reports, path) -> None:
    from .tighten import StepReport  # local import to avoid a cycle
    rows = [StepReport.CSV_HEADER]
    rows.extend(r.csv_row() for r in reports)
    Path(path).write_text("\n".join(rows) + "\n")
