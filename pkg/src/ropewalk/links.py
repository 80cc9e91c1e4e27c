"""Closed polygonal links in 3-space and their per-vertex geometry.

A link is an ordered list of closed components; component ``c`` has vertices
``v_0 .. v_{V-1}`` and edges ``e_i = [v_i, v_{i+1 mod V}]``.  All quantities
here are pure functions of the vertex coordinates; the types are immutable
value data and safe to share between threads.

Indices in the public API are always (component, vertex) or (component, edge)
pairs.  A flat global ordering exists only inside :class:`ArclengthIndex` and
the cached edge tables, which prevents off-by-one mistakes at component
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "Component",
    "PolyLink",
    "VertexGeometry",
    "ArclengthIndex",
    "total_length",
    "turning_angle",
    "minrad",
    "vertex_geometry",
    "turning_angles",
    "minrads",
    "arclength_coordinates",
]

# Turning angles below this are treated as exactly straight (MinRad = +inf);
# angles above pi - DEGENERATE_ANGLE_TOL mean an edge doubles back on itself,
# which only happens for corrupted input.
STRAIGHT_ANGLE_TOL = 1e-14
DEGENERATE_ANGLE_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


def _as_vertex_array(vertices) -> np.ndarray:
    arr = np.asarray(vertices, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"expected an (n, 3) coordinate array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Component:
    """One closed loop of the link; ``vertices`` is a read-only (V, 3) array."""

    vertices: np.ndarray

    def __post_init__(self):
        arr = _as_vertex_array(self.vertices)
        if len(arr) < 3:
            raise GeometryError(f"component needs >= 3 vertices, got {len(arr)}")
        if not np.all(np.isfinite(arr)):
            raise GeometryError("component has non-finite coordinates")
        closed_diff = np.roll(arr, -1, axis=0) - arr
        if np.any(np.all(closed_diff == 0.0, axis=1)):
            k = int(np.nonzero(np.all(closed_diff == 0.0, axis=1))[0][0])
            raise GeometryError(f"consecutive duplicate vertices at index {k}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vertices", arr)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @property
    def length(self) -> float:
        return float(self.edge_lengths.sum())


class PolyLink:
    """An ordered collection of closed polygonal components.

    Component order is meaningful: it defines the single global arclength
    coordinate used by contact plots and strut bookkeeping.
    """

    def __init__(self, components: Iterable[Component | np.ndarray | Sequence]):
        comps = []
        for c in components:
            comps.append(c if isinstance(c, Component) else Component(c))
        if not comps:
            raise GeometryError("a link needs at least one component")
        self.components: tuple[Component, ...] = tuple(comps)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def num_vertices(self) -> int:
        return sum(len(c) for c in self.components)

    @property
    def num_edges(self) -> int:
        return self.num_vertices  # closed loops: one edge per vertex

    @cached_property
    def vertex_base(self) -> np.ndarray:
        """Flat index of each component's first vertex (plus total as sentinel)."""
        counts = [len(c) for c in self.components]
        return np.concatenate([[0], np.cumsum(counts)])

    @cached_property
    def stacked_vertices(self) -> np.ndarray:
        arr = np.concatenate([c.vertices for c in self.components], axis=0)
        arr.setflags(write=False)
        return arr

    # --- flat edge tables used by the contact machinery -----------------
    @cached_property
    def edge_tables(self) -> "EdgeTables":
        starts, ends, comp_of, idx_in = [], [], [], []
        for ci, c in enumerate(self.components):
            v = c.vertices
            starts.append(v)
            ends.append(np.roll(v, -1, axis=0))
            comp_of.append(np.full(len(v), ci, dtype=np.intp))
            idx_in.append(np.arange(len(v), dtype=np.intp))
        p0 = np.concatenate(starts, axis=0)
        p1 = np.concatenate(ends, axis=0)
        comp = np.concatenate(comp_of)
        eidx = np.concatenate(idx_in)
        base = self.vertex_base
        nloc = np.array([len(c) for c in self.components], dtype=np.intp)
        prev_gid = base[comp] + (eidx - 1) % nloc[comp]
        next_gid = base[comp] + (eidx + 1) % nloc[comp]
        vec = p1 - p0
        length = np.linalg.norm(vec, axis=1)
        unit = vec / length[:, None]
        for a in (p0, p1, comp, eidx, prev_gid, next_gid, vec, length, unit):
            a.setflags(write=False)
        return EdgeTables(p0, p1, comp, eidx, prev_gid, next_gid, vec, length, unit)

    def with_vertices(self, stacked: np.ndarray) -> "PolyLink":
        """New link with the same component structure and fresh coordinates."""
        base = self.vertex_base
        return PolyLink(
            [stacked[base[i]: base[i + 1]] for i in range(len(self.components))]
        )

    def global_vertex(self, comp: int, vert: int) -> int:
        return int(self.vertex_base[comp]) + vert % len(self.components[comp])


@dataclass(frozen=True)
class EdgeTables:
    """Flat per-edge arrays for the whole link (internal acceleration data)."""

    start: np.ndarray      # (E, 3)
    end: np.ndarray        # (E, 3)
    comp: np.ndarray       # (E,) component of each edge
    index: np.ndarray      # (E,) edge index within its component
    prev_gid: np.ndarray   # (E,) global id of the preceding edge (cyclic)
    next_gid: np.ndarray   # (E,) global id of the following edge (cyclic)
    vec: np.ndarray        # (E, 3) end - start
    length: np.ndarray     # (E,)
    unit: np.ndarray       # (E, 3)


@dataclass(frozen=True)
class VertexGeometry:
    turning_angle: float
    prev_edge_len: float
    next_edge_len: float
    minrad: float


@dataclass(frozen=True)
class ArclengthIndex:
    """Cumulative arclength offsets: global coordinate of any edge point.

    Component k starts at the summed length of components 0..k-1; within a
    component, edge offsets accumulate from that base.  A point at parameter
    u in [0, 1] on edge (c, i) sits at ``offset(c, i) + u * edge_length``.
    """

    component_offsets: np.ndarray           # (C,)
    edge_offsets: tuple[np.ndarray, ...]    # per component, (V_c,) local offsets
    edge_lengths: tuple[np.ndarray, ...]
    total_length: float

    def coordinate(self, comp: int, edge: int, u: float = 0.0) -> float:
        return float(
            self.component_offsets[comp]
            + self.edge_offsets[comp][edge]
            + u * self.edge_lengths[comp][edge]
        )


def total_length(link: PolyLink) -> float:
    """Sum of all edge lengths over all components."""
    return float(link.edge_tables.length.sum())


def _vertex_edge_vectors(link: PolyLink, comp: int, vert: int):
    c = link.components[comp]
    n = len(c)
    vert %= n
    a = c.vertices[vert] - c.vertices[(vert - 1) % n]   # incoming edge
    b = c.vertices[(vert + 1) % n] - c.vertices[vert]   # outgoing edge
    la = float(np.linalg.norm(a))
    lb = float(np.linalg.norm(b))
    if la == 0.0 or lb == 0.0:
        raise GeometryError(f"degenerate edge at component {comp}, vertex {vert}")
    return a, b, la, lb


def turning_angle(link: PolyLink, comp: int, vert: int) -> float:
    """Angle in [0, pi) between the edge directions meeting at a vertex.

    Computed as atan2(|a x b|, a.b), which stays accurate both near 0 and
    near pi, unlike the acos of a normalized dot product.
    """
    a, b, la, lb = _vertex_edge_vectors(link, comp, vert)
    cross = np.cross(a, b)
    theta = float(np.arctan2(np.linalg.norm(cross), float(np.dot(a, b))))
    if theta >= np.pi - DEGENERATE_ANGLE_TOL:
        raise GeometryError(
            f"edge doubles back on itself at component {comp}, vertex {vert}"
            f" (turning angle {theta:.12f})"
        )
    return theta


def minrad(link: PolyLink, comp: int, vert: int) -> float:
    """Discrete radius of curvature at a vertex.

    Radius of the circle tangent to both incident edges through the midpoint
    of the shorter one: min(|e-|, |e+|) / (2 tan(theta/2)).  A straight vertex
    has no curvature constraint and reports +inf.
    """
    a, b, la, lb = _vertex_edge_vectors(link, comp, vert)
    theta = turning_angle(link, comp, vert)
    if theta <= STRAIGHT_ANGLE_TOL:
        return float("inf")
    return min(la, lb) / (2.0 * np.tan(0.5 * theta))


def vertex_geometry(link: PolyLink, comp: int, vert: int) -> VertexGeometry:
    a, b, la, lb = _vertex_edge_vectors(link, comp, vert)
    theta = turning_angle(link, comp, vert)
    mr = float("inf") if theta <= STRAIGHT_ANGLE_TOL else min(la, lb) / (2.0 * np.tan(0.5 * theta))
    return VertexGeometry(theta, la, lb, mr)


def turning_angles(link: PolyLink) -> list[np.ndarray]:
    """Per-component arrays of turning angles (vectorized over vertices)."""
    out = []
    for ci, c in enumerate(link.components):
        e = c.edge_vectors
        a = np.roll(e, 1, axis=0)   # incoming edge at each vertex
        b = e                        # outgoing edge
        cross = np.cross(a, b)
        theta = np.arctan2(np.linalg.norm(cross, axis=1), np.einsum("ij,ij->i", a, b))
        if np.any(theta >= np.pi - DEGENERATE_ANGLE_TOL):
            k = int(np.argmax(theta))
            raise GeometryError(f"edge doubles back on itself at component {ci}, vertex {k}")
        out.append(theta)
    return out


def minrads(link: PolyLink) -> list[np.ndarray]:
    """Per-component MinRad arrays; straight vertices get +inf."""
    out = []
    for c, theta in zip(link.components, turning_angles(link)):
        ln = c.edge_lengths
        shorter = np.minimum(np.roll(ln, 1), ln)
        with np.errstate(divide="ignore"):
            mr = np.where(theta <= STRAIGHT_ANGLE_TOL,
                          np.inf,
                          shorter / (2.0 * np.tan(0.5 * theta)))
        out.append(mr)
    return out


def arclength_coordinates(link: PolyLink) -> ArclengthIndex:
    comp_offsets = np.empty(len(link.components))
    edge_offsets = []
    edge_lengths = []
    acc = 0.0
    for i, c in enumerate(link.components):
        ln = c.edge_lengths
        comp_offsets[i] = acc
        local = np.concatenate([[0.0], np.cumsum(ln)[:-1]])
        edge_offsets.append(local)
        edge_lengths.append(ln)
        acc += float(ln.sum())
    return ArclengthIndex(
        component_offsets=comp_offsets,
        edge_offsets=tuple(edge_offsets),
        edge_lengths=tuple(edge_lengths),
        total_length=acc,
    )
