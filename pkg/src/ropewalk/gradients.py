"""Analytic first derivatives of length, strut chords and MinRad with
respect to vertex positions.

Every gradient is returned as an (N, 3) array aligned with the link's
stacked vertex order and is supported only on the vertices the quantity
actually depends on.  All formulas are hand-derived and checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .links import (
    GeometryError,
    PolyLink,
    DEGENERATE_ANGLE_TOL,
    STRAIGHT_ANGLE_TOL,
)
from .contacts import Strut

__all__ = [
    "InactiveConstraintError",
    "length_gradient",
    "strut_gradient",
    "strut_gradient_entries",
    "minrad_gradient",
    "minrad_gradient_entries",
]

# Edge lengths closer than this (relative) count as tied; the MinRad
# subgradient is then the average of the two one-sided branches.
EDGE_TIE_TOL = 1e-12


class InactiveConstraintError(GeometryError):
    """The requested constraint does not bind (e.g. MinRad at a straight vertex)."""


def length_gradient(link: PolyLink) -> np.ndarray:
    """d(total length)/d(vertex): sum of outward unit edge vectors.

    At vertex i this is unit(v_i - v_{i-1}) + unit(v_i - v_{i+1}); it cancels
    exactly at collinear vertices and sums to zero over each closed component.
    """
    grad = np.zeros((link.num_vertices, 3))
    base = link.vertex_base
    for ci, c in enumerate(link.components):
        unit = c.edge_vectors / c.edge_lengths[:, None]
        grad[base[ci]: base[ci + 1]] = np.roll(unit, 1, axis=0) - unit
    return grad


def strut_gradient_entries(link: PolyLink, strut: Strut):
    """Support of the chord-length gradient: 4 vertex ids and their vectors.

    The strut parameters are frozen during linearization; where the closest
    pair is interior and unique this equals the true derivative of the
    minimum distance (envelope property), and at clamped endpoints it is the
    standard stable choice.
    """
    p, q = strut.points(link)
    w = p - q
    chord = float(np.linalg.norm(w))
    if chord == 0.0:
        raise GeometryError("zero-length chord has no direction")
    n = w / chord
    na, nb = len(link.components[strut.comp_a]), len(link.components[strut.comp_b])
    ids = np.array([
        link.global_vertex(strut.comp_a, strut.edge_a),
        link.global_vertex(strut.comp_a, (strut.edge_a + 1) % na),
        link.global_vertex(strut.comp_b, strut.edge_b),
        link.global_vertex(strut.comp_b, (strut.edge_b + 1) % nb),
    ])
    vecs = np.array([
        (1.0 - strut.u) * n,
        strut.u * n,
        -(1.0 - strut.v) * n,
        -strut.v * n,
    ])
    return ids, vecs


def strut_gradient(link: PolyLink, strut: Strut) -> np.ndarray:
    grad = np.zeros((link.num_vertices, 3))
    ids, vecs = strut_gradient_entries(link, strut)
    np.add.at(grad, ids, vecs)  # add, not assign: edges of a 3-gon share vertices
    return grad


def _minrad_branch_entries(a, b, la, lb, theta, use_prev: bool):
    """Gradient of (shorter edge)/(2 tan(theta/2)) wrt (v_prev, v, v_next)
    when the branch uses the previous (use_prev) or next edge length."""
    ah = a / la
    bh = b / lb
    t2 = np.tan(0.5 * theta)
    cot = 1.0 / t2
    m = la if use_prev else lb

    # d theta: unit rejections of one edge direction from the other.
    qa = bh - np.dot(ah, bh) * ah
    qb = ah - np.dot(ah, bh) * bh
    qa /= np.linalg.norm(qa)
    qb /= np.linalg.norm(qb)
    dth_da = -qa / la          # wrt the incoming edge vector a
    dth_db = -qb / lb          # wrt the outgoing edge vector b

    coef = -m * (1.0 + t2 * t2) / (4.0 * t2 * t2)
    g_prev = -coef * dth_da
    g_self = coef * (dth_da - dth_db)
    g_next = coef * dth_db
    if use_prev:
        g_prev += -0.5 * cot * ah
        g_self += 0.5 * cot * ah
    else:
        g_self += -0.5 * cot * bh
        g_next += 0.5 * cot * bh
    return np.array([g_prev, g_self, g_next])


def _vertex_wedge(link: PolyLink, comp: int, vert: int):
    c = link.components[comp]
    n = len(c)
    vert %= n
    a = c.vertices[vert] - c.vertices[(vert - 1) % n]
    b = c.vertices[(vert + 1) % n] - c.vertices[vert]
    la = float(np.linalg.norm(a))
    lb = float(np.linalg.norm(b))
    if la == 0.0 or lb == 0.0:
        raise GeometryError(f"degenerate edge at component {comp}, vertex {vert}")
    cross = np.cross(a, b)
    theta = float(np.arctan2(np.linalg.norm(cross), float(np.dot(a, b))))
    if theta <= STRAIGHT_ANGLE_TOL:
        raise InactiveConstraintError(
            f"MinRad is infinite at component {comp}, vertex {vert}")
    if theta >= np.pi - DEGENERATE_ANGLE_TOL:
        raise GeometryError(
            f"edge doubles back on itself at component {comp}, vertex {vert}")
    ids = np.array([
        link.global_vertex(comp, vert - 1),
        link.global_vertex(comp, vert),
        link.global_vertex(comp, vert + 1),
    ])
    return a, b, la, lb, theta, ids


def minrad_branch_values(link: PolyLink, comp: int, vert: int):
    """Both single-branch radii len/(2 tan(theta/2)) at a vertex, with their
    gradient rows over (prev, self, next).

    MinRad is the smaller of the two; near an edge-length tie the branches
    cross, so consumers that need a smooth model (feasibility restoration)
    can constrain each branch separately.
    """
    a, b, la, lb, theta, ids = _vertex_wedge(link, comp, vert)
    t2 = np.tan(0.5 * theta)
    value_prev = la / (2.0 * t2)
    value_next = lb / (2.0 * t2)
    rows_prev = _minrad_branch_entries(a, b, la, lb, theta, True)
    rows_next = _minrad_branch_entries(a, b, la, lb, theta, False)
    return ids, (value_prev, rows_prev), (value_next, rows_next)


def minrad_gradient_entries(link: PolyLink, comp: int, vert: int):
    """Vertex ids (prev, self, next) and gradient rows for MinRad there.

    An exact tie between the incident edge lengths returns the mean of the
    two branch gradients, a deterministic subgradient suited to the
    near-equilateral polygons the tightener maintains.
    """
    a, b, la, lb, theta, ids = _vertex_wedge(link, comp, vert)
    if abs(la - lb) <= EDGE_TIE_TOL * max(la, lb):
        rows = 0.5 * (_minrad_branch_entries(a, b, la, lb, theta, True)
                      + _minrad_branch_entries(a, b, la, lb, theta, False))
    else:
        rows = _minrad_branch_entries(a, b, la, lb, theta, la < lb)
    return ids, rows


def minrad_gradient(link: PolyLink, comp: int, vert: int) -> np.ndarray:
    grad = np.zeros((link.num_vertices, 3))
    ids, rows = minrad_gradient_entries(link, comp, vert)
    np.add.at(grad, ids, rows)
    return grad


# ---------------------------------------------------------------------------
# Batched builders for the tightener's hot path.  Global edge ids double as
# global vertex ids (edge k starts at vertex k within each component), so the
# edge tables give every index needed without Python-level loops.
# ---------------------------------------------------------------------------

def strut_rows_batch(link: PolyLink, gi, gj, u, v, d):
    """Chord-length gradients for many struts at once.

    Returns ids (m, 4) of the supporting vertices and rows (m, 4, 3), in the
    order (a0, a1, b0, b1) with barycentric weights (1-u, u, -(1-v), -v) on
    the unit chord direction.
    """
    et = link.edge_tables
    pa = et.start[gi] + u[:, None] * et.vec[gi]
    pb = et.start[gj] + v[:, None] * et.vec[gj]
    w = (pa - pb) / d[:, None]
    ids = np.stack([gi, et.next_gid[gi], gj, et.next_gid[gj]], axis=1)
    rows = np.stack([(1.0 - u)[:, None] * w, u[:, None] * w,
                     -(1.0 - v)[:, None] * w, -v[:, None] * w], axis=1)
    return ids, rows


def minrad_branch_rows_batch(link: PolyLink, vids):
    """Both branch radii and their gradients at many vertices at once.

    ``vids`` are global vertex ids; returns ids (m, 3) over (prev, self,
    next) plus (value, rows) for the previous-edge and next-edge branches.
    Vertices must have nonzero turning angle.
    """
    et = link.edge_tables
    prev = et.prev_gid[vids]
    a = et.vec[prev]
    b = et.vec[vids]
    la = et.length[prev]
    lb = et.length[vids]
    ah = et.unit[prev]
    bh = et.unit[vids]

    cr = np.cross(a, b)
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]
    theta = np.arctan2(np.linalg.norm(cr, axis=1), dot)
    t2 = np.tan(0.5 * theta)
    cot = 1.0 / t2

    cos_ab = ah[:, 0] * bh[:, 0] + ah[:, 1] * bh[:, 1] + ah[:, 2] * bh[:, 2]
    qa = bh - cos_ab[:, None] * ah
    qa /= np.linalg.norm(qa, axis=1)[:, None]
    qb = ah - cos_ab[:, None] * bh
    qb /= np.linalg.norm(qb, axis=1)[:, None]
    dth_da = -qa / la[:, None]
    dth_db = -qb / lb[:, None]

    theta_coef = (1.0 + t2 * t2) / (4.0 * t2 * t2)

    def branch(m, use_prev):
        coef = (-m * theta_coef)[:, None]
        g_prev = -coef * dth_da
        g_self = coef * (dth_da - dth_db)
        g_next = coef * dth_db
        if use_prev:
            g_prev = g_prev - 0.5 * cot[:, None] * ah
            g_self = g_self + 0.5 * cot[:, None] * ah
        else:
            g_self = g_self - 0.5 * cot[:, None] * bh
            g_next = g_next + 0.5 * cot[:, None] * bh
        return np.stack([g_prev, g_self, g_next], axis=1)

    ids = np.stack([prev, vids, et.next_gid[vids]], axis=1)
    return (ids,
            (la / (2.0 * t2), branch(la, True)),
            (lb / (2.0 * t2), branch(lb, False)))
