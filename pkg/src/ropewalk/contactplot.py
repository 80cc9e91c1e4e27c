"""Triangular self-contact plots and their SVG rendering.

Each strut with a positive contact force becomes a square box at its
arclength coordinates (s, t), s < t, in the lower triangle of the
[0, L] x [0, L] square.  Boxes are sized to the average edge length of the
polygon, which is the positional uncertainty a polygonal minimizer carries.
Component breaks show up three ways: colored bands along the diagonal, a
checkerboard of component-pair cells, and lifted tick labels.

Rendering is deterministic: identical plot and style produce byte-identical
SVG.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

from .links import GeometryError, PolyLink, arclength_coordinates
from .contacts import Strut

__all__ = [
    "ContactBox",
    "ContactPlot",
    "PlotStyle",
    "build_contact_plot",
    "emit_svg",
    "load_style",
]


@dataclass(frozen=True)
class ContactBox:
    s: float          # smaller arclength coordinate
    t: float          # larger arclength coordinate
    size: float       # box side, in arclength units
    weight: float     # contact force (positive)


@dataclass(frozen=True)
class ContactPlot:
    total_length: float
    component_offsets: tuple[float, ...]   # start arclength of each component
    component_lengths: tuple[float, ...]
    boxes: tuple[ContactBox, ...]
    box_size: float
    tick_values: tuple[float, ...]         # uniform decade ticks
    break_values: tuple[float, ...]        # component starts after the first


@dataclass(frozen=True)
class PlotStyle:
    canvas_px: int = 1000
    margin_px: int = 70
    box_color: str = "#1a6b1a"
    band_colors: tuple[str, ...] = ("#9e9e9e", "#e08a00", "#2e8b2e")
    checker_colors: tuple[str, ...] = ("#f3ead8", "#ded0ea")
    grid_color: str = "#888888"
    tick_color: str = "#222222"
    band_width_px: float = 8.0
    stroke_width: float = 1.0
    font_px: int = 14


def load_style(path) -> PlotStyle:
    """Read ``key = value`` lines ('#' comments) into a PlotStyle.

    Comma-separated values make tuples; unknown keys are rejected so typos
    do not silently produce the default look.
    """
    style = PlotStyle()
    fields = {f for f in style.__dataclass_fields__}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown style key {key!r}")
        current = getattr(style, key)
        if isinstance(current, tuple):
            parsed = tuple(v.strip() for v in val.split(","))
        elif isinstance(current, int):
            parsed = int(val)
        elif isinstance(current, float):
            parsed = float(val)
        else:
            parsed = val
        style = replace(style, **{key: parsed})
    return style


def build_contact_plot(link: PolyLink, struts: Iterable[Strut]) -> ContactPlot:
    """Map struts with positive multipliers to arclength boxes.

    Struts must carry multipliers; zero-force contacts are omitted, matching
    the convention that boxes show load-bearing self-contacts only.
    """
    index = arclength_coordinates(link)
    L = index.total_length
    nedges = link.num_edges
    size = L / nedges   # average edge length
    boxes = []
    for s in struts:
        if (s.comp_a >= len(link.components)
                or s.edge_a >= len(link.components[s.comp_a])
                or s.comp_b >= len(link.components)
                or s.edge_b >= len(link.components[s.comp_b])):
            raise GeometryError(f"strut references missing edge: {s.key}")
        if s.multiplier is None or s.multiplier <= 0.0:
            continue
        ca = index.coordinate(s.comp_a, s.edge_a, s.u)
        cb = index.coordinate(s.comp_b, s.edge_b, s.v)
        lo, hi = (ca, cb) if ca < cb else (cb, ca)
        boxes.append(ContactBox(lo, hi, size, float(s.multiplier)))
    boxes.sort(key=lambda b: (b.s, b.t))

    offsets = tuple(float(x) for x in index.component_offsets)
    lengths = tuple(float(arr.sum()) for arr in index.edge_lengths)
    ticks = tuple(k * L / 10.0 for k in range(11))
    return ContactPlot(
        total_length=L,
        component_offsets=offsets,
        component_lengths=lengths,
        boxes=tuple(boxes),
        box_size=size,
        tick_values=ticks,
        break_values=tuple(offsets[1:]),
    )


def _f(x: float) -> str:
    return f"{x:.3f}"


def emit_svg(plot: ContactPlot, style: PlotStyle = PlotStyle()) -> bytes:
    """Render the lower-triangle contact plot as standalone SVG 1.1 bytes.

    The s coordinate runs along the horizontal axis and t down the vertical,
    so boxes (s < t) fill the triangle below the main diagonal; labels run
    along the diagonal, with component breaks lifted farther out.
    """
    c = style.canvas_px
    m = style.margin_px
    span = c - 2 * m
    L = plot.total_length

    def X(val: float) -> float:
        return m + span * val / L

    out = []
    out.append('<?xml version="1.0" encoding="UTF-8"?>')
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{c}" height="{c}" viewBox="0 0 {c} {c}">')
    out.append(f'<rect x="0" y="0" width="{c}" height="{c}" fill="#ffffff"/>')

    # Checkerboard: one cell per component pair, clipped to the triangle.
    ncomp = len(plot.component_offsets)
    ends = tuple(o + l for o, l in zip(plot.component_offsets, plot.component_lengths))
    for a in range(ncomp):
        for b in range(a, ncomp):
            fill = style.checker_colors[(a + b) % len(style.checker_colors)]
            sa0, sa1 = plot.component_offsets[a], ends[a]
            sb0, sb1 = plot.component_offsets[b], ends[b]
            if a == b:
                pts = (f"{_f(X(sa0))},{_f(X(sb0))} {_f(X(sa1))},{_f(X(sb1))} "
                       f"{_f(X(sa0))},{_f(X(sb1))}")
                out.append(f'<polygon points="{pts}" fill="{fill}"/>')
            else:
                out.append(
                    f'<rect x="{_f(X(sa0))}" y="{_f(X(sb0))}" '
                    f'width="{_f(X(sa1) - X(sa0))}" height="{_f(X(sb1) - X(sb0))}" '
                    f'fill="{fill}"/>')

    # Triangle outline.
    tri = (f"{_f(X(0))},{_f(X(0))} {_f(X(L))},{_f(X(L))} {_f(X(0))},{_f(X(L))}")
    out.append(f'<polygon points="{tri}" fill="none" '
               f'stroke="{style.grid_color}" stroke-width="{style.stroke_width}"/>')

    # Component bands along the diagonal.
    for k in range(ncomp):
        color = style.band_colors[k % len(style.band_colors)]
        x0, x1 = X(plot.component_offsets[k]), X(ends[k])
        out.append(
            f'<line x1="{_f(x0)}" y1="{_f(x0)}" x2="{_f(x1)}" y2="{_f(x1)}" '
            f'stroke="{color}" stroke-width="{_f(style.band_width_px)}" '
            f'stroke-linecap="butt"/>')

    # Boxes (drawn after shading so they stay visible).
    for box in plot.boxes:
        half = span * box.size / L / 2.0
        bx = X(box.s) - half
        by = X(box.t) - half
        out.append(
            f'<rect x="{_f(bx)}" y="{_f(by)}" width="{_f(2 * half)}" '
            f'height="{_f(2 * half)}" fill="{style.box_color}"/>')

    # Ticks along the diagonal; component breaks lifted farther out.
    def tick(val: float, lifted: bool):
        x = X(val)
        off = 26.0 if lifted else 10.0
        out.append(
            f'<line x1="{_f(x - 4)}" y1="{_f(x + 4)}" x2="{_f(x + 4)}" '
            f'y2="{_f(x - 4)}" stroke="{style.tick_color}" '
            f'stroke-width="{style.stroke_width}"/>')
        out.append(
            f'<text x="{_f(x + off)}" y="{_f(x - off + style.font_px / 2)}" '
            f'font-family="monospace" font-size="{style.font_px}" '
            f'fill="{style.tick_color}" text-anchor="start">{val:.2f}</text>')

    for val in plot.tick_values:
        tick(val, lifted=False)
    for val in plot.break_values:
        tick(val, lifted=True)

    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")
