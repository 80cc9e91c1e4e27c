"""Self-contact detection for polygonal links: doubly-critical pairs,
thickness, ropelength and strut sets.

A *strut candidate* is a pair of points, one on each of two edges that share
no vertex, at which the self-distance function of the link has a local
minimum.  For a point interior to an edge this means the chord is
perpendicular to that edge; for a point at a vertex it means the distance
does not decrease when the point slides onto either incident edge.  The
thickness of the link is the smaller of the minimal MinRad and half the
minimal strut-candidate distance.

Two independent enumeration routes are provided: a plain O(E^2) scalar scan
(`enumerate_dcsd_bruteforce`) and a vectorized scan (`enumerate_dcsd`) whose
output must be identical.  Distance-bounded queries, the workhorse of the
tightener, prune far pairs through a uniform spatial hash of edge midpoints
(plus a coarser bounding-sphere level once links get large), which never
discards a pair that could lie within the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from .links import GeometryError, PolyLink, minrads, total_length

__all__ = [
    "Strut",
    "ThicknessReport",
    "segment_min_distance",
    "enumerate_dcsd_bruteforce",
    "enumerate_dcsd",
    "critical_pairs_within",
    "min_strut_distance",
    "thickness",
    "strut_set",
    "DEFAULT_ACTIVE_TOL",
]

# Segments whose direction cross product is this small (relative to the
# product of their lengths) take the parallel-overlap branch.
PARALLEL_EPS = 1e-12
# Slack, relative to the chord length, allowed in the vertex-cone test.
CONE_TOL = 1e-12
# Chord lengths at or below this mean the polygon touches itself.
SELF_INTERSECTION_TOL = 1e-14
DEFAULT_ACTIVE_TOL = 1e-5

_EVAL_BLOCK = 300_000       # candidate pairs evaluated per vectorized block
_ALL_PAIRS_MAX_EDGES = 512   # below this, skip spatial pruning entirely
_FLAT_GRID_MAX_EDGES = 3000  # above this, use the two-level candidate walk
_RUN_SIZE = 32               # edges per bounding sphere in the coarse level


@dataclass(frozen=True)
class Strut:
    """One doubly-critical self-distance pair.

    Endpoint A lives at parameter ``u`` on edge ``edge_a`` of component
    ``comp_a`` (B likewise); ``chord`` is the distance between the realized
    points.  ``multiplier`` is the contact force from the active-set solve,
    absent until solved.
    """

    comp_a: int
    edge_a: int
    u: float
    comp_b: int
    edge_b: int
    v: float
    chord: float
    multiplier: Optional[float] = None

    @property
    def key(self):
        return (self.comp_a, self.edge_a, self.comp_b, self.edge_b, self.u, self.v)

    def with_multiplier(self, lam: float) -> "Strut":
        return replace(self, multiplier=float(lam))

    def points(self, link: PolyLink) -> tuple[np.ndarray, np.ndarray]:
        et = link.edge_tables
        base = link.vertex_base
        ga = int(base[self.comp_a]) + self.edge_a
        gb = int(base[self.comp_b]) + self.edge_b
        p = et.start[ga] + self.u * et.vec[ga]
        q = et.start[gb] + self.v * et.vec[gb]
        return p, q


@dataclass(frozen=True)
class ThicknessReport:
    pthi: float
    governing: tuple                 # ("kink", comp, vert) or ("strut", Strut)
    total_length: float
    prop: float
    min_minrad: float
    min_strut_halfdist: float


def segment_min_distance(p0, p1, q0, q1) -> tuple[float, float, float]:
    """Closest-point parameters (u, v) and distance between two segments.

    Parallel segments with overlapping projections report the midpoint of the
    overlap interval, so the representative pair of a continuum of minimizers
    is deterministic and symmetric.
    """
    p0 = (float(p0[0]), float(p0[1]), float(p0[2]))
    p1 = (float(p1[0]), float(p1[1]), float(p1[2]))
    q0 = (float(q0[0]), float(q0[1]), float(q0[2]))
    q1 = (float(q1[0]), float(q1[1]), float(q1[2]))
    d1 = (p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2])
    d2 = (q1[0] - q0[0], q1[1] - q0[1], q1[2] - q0[2])
    r = (p0[0] - q0[0], p0[1] - q0[1], p0[2] - q0[2])
    a = d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]
    e = d2[0] * d2[0] + d2[1] * d2[1] + d2[2] * d2[2]
    if a == 0.0 or e == 0.0:
        raise GeometryError("degenerate (zero-length) segment")
    b = d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]
    c = d1[0] * r[0] + d1[1] * r[1] + d1[2] * r[2]
    f = d2[0] * r[0] + d2[1] * r[1] + d2[2] * r[2]
    denom = a * e - b * b
    if denom <= PARALLEL_EPS * a * e:
        # Parallel: project q0, q1 onto the p-line; overlap -> midpoint rule.
        t0 = -c / a
        t1 = (b - c) / a
        lo = max(0.0, min(t0, t1))
        hi = min(1.0, max(t0, t1))
        if lo <= hi:
            u = 0.5 * (lo + hi)
        elif min(t0, t1) > 1.0:
            u = 1.0
        else:
            u = 0.0
        v = (b * u + f) / e
        v = min(1.0, max(0.0, v))
    else:
        u = (b * f - c * e) / denom
        u = min(1.0, max(0.0, u))
        v = (b * u + f) / e
        if v < 0.0:
            v = 0.0
            u = min(1.0, max(0.0, -c / a))
        elif v > 1.0:
            v = 1.0
            u = min(1.0, max(0.0, (b - c) / a))
    wx = (p0[0] + u * d1[0]) - (q0[0] + v * d2[0])
    wy = (p0[1] + u * d1[1]) - (q0[1] + v * d2[1])
    wz = (p0[2] + u * d1[2]) - (q0[2] + v * d2[2])
    return u, v, math.sqrt(wx * wx + wy * wy + wz * wz)


def _batch_segment_distance(P0, P1, Q0, Q1):
    """Vectorized twin of :func:`segment_min_distance` over (n, 3) stacks.

    Branch structure and operation order mirror the scalar routine so both
    produce identical parameters on the same pair.
    """
    D1 = P1 - P0
    D2 = Q1 - Q0
    R = P0 - Q0
    a = D1[:, 0] * D1[:, 0] + D1[:, 1] * D1[:, 1] + D1[:, 2] * D1[:, 2]
    e = D2[:, 0] * D2[:, 0] + D2[:, 1] * D2[:, 1] + D2[:, 2] * D2[:, 2]
    b = D1[:, 0] * D2[:, 0] + D1[:, 1] * D2[:, 1] + D1[:, 2] * D2[:, 2]
    c = D1[:, 0] * R[:, 0] + D1[:, 1] * R[:, 1] + D1[:, 2] * R[:, 2]
    f = D2[:, 0] * R[:, 0] + D2[:, 1] * R[:, 1] + D2[:, 2] * R[:, 2]
    denom = a * e - b * b
    parallel = denom <= PARALLEL_EPS * a * e

    with np.errstate(divide="ignore", invalid="ignore"):
        u_g = np.clip((b * f - c * e) / denom, 0.0, 1.0)
        v_g = (b * u_g + f) / e
        u_lo = np.clip(-c / a, 0.0, 1.0)
        u_hi = np.clip((b - c) / a, 0.0, 1.0)
        u_g = np.where(v_g < 0.0, u_lo, np.where(v_g > 1.0, u_hi, u_g))
        v_g = np.clip(v_g, 0.0, 1.0)

        t0 = -c / a
        t1 = (b - c) / a
        lo = np.maximum(0.0, np.minimum(t0, t1))
        hi = np.minimum(1.0, np.maximum(t0, t1))
        u_p = np.where(lo <= hi,
                       0.5 * (lo + hi),
                       np.where(np.minimum(t0, t1) > 1.0, 1.0, 0.0))
        v_p = np.clip((b * u_p + f) / e, 0.0, 1.0)

    U = np.where(parallel, u_p, u_g)
    V = np.where(parallel, v_p, v_g)
    W = (P0 + U[:, None] * D1) - (Q0 + V[:, None] * D2)
    dist = np.sqrt(W[:, 0] * W[:, 0] + W[:, 1] * W[:, 1] + W[:, 2] * W[:, 2])
    return U, V, dist


# ---------------------------------------------------------------------------
# Candidate filtering: local minimality of the self-distance function
# ---------------------------------------------------------------------------

def _cone_ok_scalar(w, wnorm, u, fwd, bwd) -> bool:
    """Local-min test on one side of a chord.

    ``w`` points from this endpoint toward the other one.  Interior points
    already satisfy perpendicularity by construction.  At a vertex the
    distance must not decrease when sliding onto either incident edge:
    forward motion must not shrink the chord (w . fwd <= 0), nor backward
    motion (w . bwd >= 0).
    """
    tol = CONE_TOL * wnorm
    if 0.0 < u < 1.0:
        return True
    if u == 0.0:
        along = w[0] * fwd[0][0] + w[1] * fwd[0][1] + w[2] * fwd[0][2]
        back = w[0] * bwd[0][0] + w[1] * bwd[0][1] + w[2] * bwd[0][2]
    else:
        along = w[0] * fwd[1][0] + w[1] * fwd[1][1] + w[2] * fwd[1][2]
        back = w[0] * bwd[1][0] + w[1] * bwd[1][1] + w[2] * bwd[1][2]
    return along <= tol and back >= -tol


def _eval_candidates(link: PolyLink, gi: np.ndarray, gj: np.ndarray):
    """Evaluate pair distances and keep the doubly-critical ones.

    Returns parallel arrays (gi, gj, u, v, d, pa, pb) of the survivors.
    """
    et = link.edge_tables
    U, V, D = _batch_segment_distance(et.start[gi], et.end[gi],
                                      et.start[gj], et.end[gj])
    PA = et.start[gi] + U[:, None] * et.vec[gi]
    PB = et.start[gj] + V[:, None] * et.vec[gj]
    W = PB - PA                      # from endpoint A toward endpoint B
    tol = CONE_TOL * D

    at0 = U == 0.0
    at1 = U == 1.0
    interior = ~(at0 | at1)
    fwd = np.where(at0[:, None], et.unit[gi], et.unit[et.next_gid[gi]])
    bwd = np.where(at0[:, None], et.unit[et.prev_gid[gi]], et.unit[gi])
    along = W[:, 0] * fwd[:, 0] + W[:, 1] * fwd[:, 1] + W[:, 2] * fwd[:, 2]
    back = W[:, 0] * bwd[:, 0] + W[:, 1] * bwd[:, 1] + W[:, 2] * bwd[:, 2]
    keep = interior | ((along <= tol) & (back >= -tol))

    at0 = V == 0.0
    at1 = V == 1.0
    interior = ~(at0 | at1)
    fwd = np.where(at0[:, None], et.unit[gj], et.unit[et.next_gid[gj]])
    bwd = np.where(at0[:, None], et.unit[et.prev_gid[gj]], et.unit[gj])
    along = -(W[:, 0] * fwd[:, 0] + W[:, 1] * fwd[:, 1] + W[:, 2] * fwd[:, 2])
    back = -(W[:, 0] * bwd[:, 0] + W[:, 1] * bwd[:, 1] + W[:, 2] * bwd[:, 2])
    keep &= interior | ((along <= tol) & (back >= -tol))

    return gi[keep], gj[keep], U[keep], V[keep], D[keep], PA[keep], PB[keep]


def _dedupe_candidates(link: PolyLink, gi, gj, u, v, d, pa, pb):
    """Drop repeated point pairs reported by adjacent edge pairs.

    A chord endpoint interior to an edge belongs to that edge alone, so only
    candidates clamped at a vertex (u or v exactly 0 or 1) can repeat, and
    their twin always sits on a pair adjacent on the edge-pair grid.  The
    lexicographically smallest representative wins.
    """
    clamped = ((u == 0.0) | (u == 1.0) | (v == 0.0) | (v == 1.0))
    if not clamped.any():
        return gi, gj, u, v, d
    scale = float(np.max(np.abs(link.stacked_vertices))) + 1.0
    tol = 1e-9 * scale
    sub = np.nonzero(clamped)[0]
    order = sub[np.lexsort((v[sub], u[sub], gj[sub], gi[sub]))]
    kept: list[int] = []
    by_pair: dict[tuple[int, int], list[int]] = {}
    et = link.edge_tables
    nxt, prv = et.next_gid, et.prev_gid
    for k in order:
        i, j = int(gi[k]), int(gj[k])
        dup = False
        for ni in (prv[i], i, nxt[i]):
            for nj in (prv[j], j, nxt[j]):
                for t in by_pair.get((int(ni), int(nj)), ()):
                    if (abs(pa[t, 0] - pa[k, 0]) <= tol
                            and abs(pa[t, 1] - pa[k, 1]) <= tol
                            and abs(pa[t, 2] - pa[k, 2]) <= tol
                            and abs(pb[t, 0] - pb[k, 0]) <= tol
                            and abs(pb[t, 1] - pb[k, 1]) <= tol
                            and abs(pb[t, 2] - pb[k, 2]) <= tol):
                        dup = True
                        break
                if dup:
                    break
            if dup:
                break
        if not dup:
            kept.append(k)
            by_pair.setdefault((i, j), []).append(k)
    keep_mask = ~clamped
    keep_mask[np.array(kept, dtype=np.intp)] = True
    return gi[keep_mask], gj[keep_mask], u[keep_mask], v[keep_mask], d[keep_mask]


def _records_to_struts(link: PolyLink, gi, gj, u, v, d) -> list[Strut]:
    et = link.edge_tables
    struts = [
        Strut(
            comp_a=int(et.comp[i]), edge_a=int(et.index[i]), u=float(uu),
            comp_b=int(et.comp[j]), edge_b=int(et.index[j]), v=float(vv),
            chord=float(dd),
        )
        for i, j, uu, vv, dd in zip(gi, gj, u, v, d)
    ]
    struts.sort(key=lambda s: s.key)
    return struts


def _admissible_mask(link: PolyLink, gi: np.ndarray, gj: np.ndarray) -> np.ndarray:
    """Edge pairs sharing a vertex never carry a meaningful contact."""
    et = link.edge_tables
    same = et.comp[gi] == et.comp[gj]
    ncomp = np.array([len(c) for c in link.components], dtype=np.intp)
    n = ncomp[et.comp[gi]]
    diff = (et.index[gj] - et.index[gi]) % n
    adjacent = (diff == 1) | (diff == n - 1) | (diff == 0)
    return ~(same & adjacent)


# ---------------------------------------------------------------------------
# Full enumerations
# ---------------------------------------------------------------------------

def enumerate_dcsd_bruteforce(link: PolyLink) -> list[Strut]:
    """Reference enumeration of all doubly-critical pairs, O(E^2) and scalar.

    Deliberately plain (pure-Python arithmetic, explicit loops) so it can
    serve as an oracle for the vectorized scan.
    """
    edges = []  # (comp, idx, p0, p1, unit, prev_unit, next_unit)
    for ci, compo in enumerate(link.components):
        verts = [tuple(map(float, p)) for p in compo.vertices]
        n = len(verts)
        units = []
        for k in range(n):
            x0, x1 = verts[k], verts[(k + 1) % n]
            dx = (x1[0] - x0[0], x1[1] - x0[1], x1[2] - x0[2])
            ln = math.sqrt(dx[0] ** 2 + dx[1] ** 2 + dx[2] ** 2)
            units.append((dx[0] / ln, dx[1] / ln, dx[2] / ln))
        for k in range(n):
            edges.append((ci, k, verts[k], verts[(k + 1) % n],
                          units[k], units[(k - 1) % n], units[(k + 1) % n]))

    raw = []
    m = len(edges)
    for i in range(m):
        ca, ia, a0, a1, ua, upa, una = edges[i]
        na = len(link.components[ca])
        for j in range(i + 1, m):
            cb, ib, b0, b1, ub, upb, unb = edges[j]
            if ca == cb:
                diff = (ib - ia) % na
                if diff in (0, 1, na - 1):
                    continue
            u, v, d = segment_min_distance(a0, a1, b0, b1)
            pa = (a0[0] + u * (a1[0] - a0[0]),
                  a0[1] + u * (a1[1] - a0[1]),
                  a0[2] + u * (a1[2] - a0[2]))
            pb = (b0[0] + v * (b1[0] - b0[0]),
                  b0[1] + v * (b1[1] - b0[1]),
                  b0[2] + v * (b1[2] - b0[2]))
            w = (pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2])
            if not _cone_ok_scalar(w, d, u, (ua, una), (upa, ua)):
                continue
            wneg = (-w[0], -w[1], -w[2])
            if not _cone_ok_scalar(wneg, d, v, (ub, unb), (upb, ub)):
                continue
            raw.append((i, j, u, v, d, pa, pb))

    if not raw:
        return []
    gi = np.array([r[0] for r in raw], dtype=np.intp)
    gj = np.array([r[1] for r in raw], dtype=np.intp)
    u = np.array([r[2] for r in raw])
    v = np.array([r[3] for r in raw])
    d = np.array([r[4] for r in raw])
    pa = np.array([r[5] for r in raw])
    pb = np.array([r[6] for r in raw])
    return _records_to_struts(link, *_dedupe_candidates(link, gi, gj, u, v, d, pa, pb))


def enumerate_dcsd(link: PolyLink, block: int = 256) -> list[Strut]:
    """All doubly-critical pairs, identical to the brute-force scan.

    Every admissible edge pair must be examined (a local minimum can occur at
    any distance), so this remains an O(E^2) sweep; it differs from the
    reference by evaluating pairs in vectorized blocks.
    """
    E = link.num_edges
    keep: list[tuple] = []
    for lo in range(0, E, block):
        hi = min(lo + block, E)
        ii, jj = np.meshgrid(np.arange(lo, hi, dtype=np.intp),
                             np.arange(E, dtype=np.intp), indexing="ij")
        ii = ii.ravel()
        jj = jj.ravel()
        mask = ii < jj
        ii, jj = ii[mask], jj[mask]
        mask = _admissible_mask(link, ii, jj)
        ii, jj = ii[mask], jj[mask]
        if len(ii):
            keep.append(_eval_candidates(link, ii, jj))
    if not keep:
        return []
    parts = [np.concatenate([k[n] for k in keep]) for n in range(7)]
    if not len(parts[0]):
        return []
    gi, gj, u, v, d, pa, pb = parts
    return _records_to_struts(link, *_dedupe_candidates(link, gi, gj, u, v, d, pa, pb))


# ---------------------------------------------------------------------------
# Distance-bounded queries
# ---------------------------------------------------------------------------

def _pair_filters(link: PolyLink, gi, gj, cutoff, min_arc_sep):
    """Admissibility, arclength-window and midpoint-reach filters."""
    mask = _admissible_mask(link, gi, gj)
    gi, gj = gi[mask], gj[mask]
    et = link.edge_tables
    if min_arc_sep > 0.0 and len(gi):
        arcs, clen = _edge_arc_positions(link)
        same = et.comp[gi] == et.comp[gj]
        raw = np.abs(arcs[gi] - arcs[gj])
        L = clen[et.comp[gi]]
        cyc = np.minimum(raw, L - raw)
        # Separation measured between edge extremes, not midpoints.
        cyc = cyc - 0.5 * (et.length[gi] + et.length[gj])
        mask = ~(same & (cyc < min_arc_sep))
        gi, gj = gi[mask], gj[mask]
    if len(gi):
        mids = 0.5 * (et.start + et.end)
        md = mids[gi] - mids[gj]
        reach = cutoff + 0.5 * (et.length[gi] + et.length[gj])
        near = (md[:, 0] ** 2 + md[:, 1] ** 2 + md[:, 2] ** 2) <= reach * reach
        gi, gj = gi[near], gj[near]
    return gi, gj


_ARC_CACHE_ATTR = "_arc_positions_cache"


def _edge_arc_positions(link: PolyLink):
    """Arclength of each edge midpoint within its component, plus lengths."""
    cached = getattr(link, _ARC_CACHE_ATTR, None)
    if cached is not None:
        return cached
    offs = []
    clen = []
    for c in link.components:
        ln = c.edge_lengths
        cum = np.concatenate([[0.0], np.cumsum(ln)[:-1]])
        offs.append(cum + 0.5 * ln)
        clen.append(float(ln.sum()))
    result = (np.concatenate(offs), np.array(clen))
    setattr(link, _ARC_CACHE_ATTR, result)
    return result


def _candidate_chunks(link: PolyLink, cutoff: float,
                      min_arc_sep: float) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield admissible (gi, gj) chunks covering every pair that could have
    minimum distance <= cutoff.

    Small links hash edge midpoints on a uniform grid (cell size = cutoff
    plus the longest edge, scanning the half-neighborhood).  Large links
    first prune pairs of 32-edge runs by bounding spheres, then expand the
    surviving run pairs; this keeps memory flat for densely resampled
    curves.

    ``min_arc_sep`` excludes same-component pairs closer than that along the
    curve.  Callers must guarantee such pairs cannot be doubly critical
    (true for curvature-bounded resamplings); it is 0 for general polygons.
    """
    et = link.edge_tables
    E = link.num_edges
    mids = 0.5 * (et.start + et.end)
    half = 0.5 * et.length

    if E <= _ALL_PAIRS_MAX_EDGES:
        # Small link: pruning machinery costs more than brute evaluation.
        gi, gj = np.triu_indices(E, k=1)
        gi = gi.astype(np.intp)
        gj = gj.astype(np.intp)
        gi, gj = _pair_filters(link, gi, gj, cutoff, min_arc_sep)
        for lo in range(0, len(gi), _EVAL_BLOCK):
            yield gi[lo: lo + _EVAL_BLOCK], gj[lo: lo + _EVAL_BLOCK]
        return

    if E <= _FLAT_GRID_MAX_EDGES:
        cell = cutoff + 2.0 * float(half.max())
        keys = np.floor(mids / cell).astype(np.int64)
        buckets: dict[tuple, np.ndarray] = {}
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        sk = keys[order]
        breaks = np.nonzero(np.any(np.diff(sk, axis=0) != 0, axis=1))[0] + 1
        for chunk in np.split(order, breaks):
            buckets[tuple(int(x) for x in keys[chunk[0]])] = np.sort(chunk)
        offsets = [(dx, dy, dz)
                   for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
                   if (dx, dy, dz) > (0, 0, 0)]
        gis, gjs = [], []
        for key in sorted(buckets):
            mine = buckets[key]
            if len(mine) > 1:
                ii, jj = np.triu_indices(len(mine), k=1)
                gis.append(mine[ii])
                gjs.append(mine[jj])
            for off in offsets:
                other = buckets.get((key[0] + off[0], key[1] + off[1], key[2] + off[2]))
                if other is None:
                    continue
                ii, jj = np.meshgrid(mine, other, indexing="ij")
                gis.append(ii.ravel())
                gjs.append(jj.ravel())
        if not gis:
            return
        gi = np.concatenate(gis)
        gj = np.concatenate(gjs)
        swap = gi > gj
        gi[swap], gj[swap] = gj[swap], gi[swap]
        gi, gj = _pair_filters(link, gi, gj, cutoff, min_arc_sep)
        for lo in range(0, len(gi), _EVAL_BLOCK):
            yield gi[lo: lo + _EVAL_BLOCK], gj[lo: lo + _EVAL_BLOCK]
        return

    # Two-level walk: bounding spheres over runs of consecutive edges.
    run_of = np.empty(E, dtype=np.intp)
    run_slices = []
    base = 0
    for c in link.components:
        n = len(c)
        for lo in range(0, n, _RUN_SIZE):
            hi = min(lo + _RUN_SIZE, n)
            run_of[base + lo: base + hi] = len(run_slices)
            run_slices.append((base + lo, base + hi))
        base += n
    nruns = len(run_slices)
    centers = np.empty((nruns, 3))
    radii = np.empty(nruns)
    arcs, clen = _edge_arc_positions(link)
    run_comp = np.empty(nruns, dtype=np.intp)
    run_arc_lo = np.empty(nruns)
    run_arc_hi = np.empty(nruns)
    for r, (lo, hi) in enumerate(run_slices):
        centers[r] = mids[lo:hi].mean(axis=0)
        radii[r] = float(np.max(np.linalg.norm(mids[lo:hi] - centers[r], axis=1)
                                + half[lo:hi]))
        run_comp[r] = et.comp[lo]
        run_arc_lo[r] = float(np.min(arcs[lo:hi] - half[lo:hi]))
        run_arc_hi[r] = float(np.max(arcs[lo:hi] + half[lo:hi]))

    ri, rj = np.triu_indices(nruns)    # include same-run pairs
    sep = np.linalg.norm(centers[ri] - centers[rj], axis=1) - radii[ri] - radii[rj]
    keep = sep <= cutoff
    if min_arc_sep > 0.0:
        same = run_comp[ri] == run_comp[rj]
        mid_i = 0.5 * (run_arc_lo[ri] + run_arc_hi[ri])
        mid_j = 0.5 * (run_arc_lo[rj] + run_arc_hi[rj])
        ext = 0.5 * (run_arc_hi[ri] - run_arc_lo[ri]) \
            + 0.5 * (run_arc_hi[rj] - run_arc_lo[rj])
        raw = np.abs(mid_i - mid_j)
        L = clen[run_comp[ri]]
        far = np.minimum(raw, L - raw) + ext
        keep &= ~(same & (far < min_arc_sep))
    ri, rj = ri[keep], rj[keep]

    buf_i: list[np.ndarray] = []
    buf_j: list[np.ndarray] = []
    buffered = 0
    for a, b in zip(ri, rj):
        la, ha = run_slices[a]
        lb, hb = run_slices[b]
        if a == b:
            ii, jj = np.triu_indices(ha - la, k=1)
            gi = (la + ii).astype(np.intp)
            gj = (la + jj).astype(np.intp)
        else:
            ii, jj = np.meshgrid(np.arange(la, ha, dtype=np.intp),
                                 np.arange(lb, hb, dtype=np.intp), indexing="ij")
            gi = ii.ravel()
            gj = jj.ravel()
            swap = gi > gj
            gi[swap], gj[swap] = gj[swap], gi[swap]
        gi, gj = _pair_filters(link, gi, gj, cutoff, min_arc_sep)
        if len(gi):
            buf_i.append(gi)
            buf_j.append(gj)
            buffered += len(gi)
        if buffered >= _EVAL_BLOCK:
            yield np.concatenate(buf_i), np.concatenate(buf_j)
            buf_i, buf_j, buffered = [], [], 0
    if buffered:
        yield np.concatenate(buf_i), np.concatenate(buf_j)


def _critical_records_within(link: PolyLink, cutoff: float,
                             min_arc_sep: float = 0.0):
    """Doubly-critical pairs with chord <= cutoff as flat arrays
    (gi, gj, u, v, d) sorted by (gi, gj, u, v)."""
    parts = []
    for gi, gj in _candidate_chunks(link, cutoff, min_arc_sep):
        rec = _eval_candidates(link, gi, gj)
        near = rec[4] <= cutoff
        if near.any():
            parts.append(tuple(x[near] for x in rec))
    if not parts:
        z = np.empty(0)
        zi = np.empty(0, dtype=np.intp)
        return zi, zi, z, z, z
    gi, gj, u, v, d, pa, pb = (np.concatenate([p[n] for p in parts])
                               for n in range(7))
    gi, gj, u, v, d = _dedupe_candidates(link, gi, gj, u, v, d, pa, pb)
    order = np.lexsort((v, u, gj, gi))
    return gi[order], gj[order], u[order], v[order], d[order]


def critical_pairs_within(link: PolyLink, cutoff: float,
                          min_arc_sep: float = 0.0) -> list[Strut]:
    """Doubly-critical pairs with chord <= cutoff, in canonical order."""
    gi, gj, u, v, d = _critical_records_within(link, cutoff, min_arc_sep)
    return _records_to_struts(link, gi, gj, u, v, d)


def _bbox_diameter(link: PolyLink) -> float:
    pts = link.stacked_vertices
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def min_strut_distance(link: PolyLink, hint: float | None = None,
                       cap: float | None = None,
                       min_arc_sep: float = 0.0) -> tuple[float, Optional[Strut]]:
    """Smallest doubly-critical distance, found by growing a cutoff query.

    The cutoff starts at ``hint`` and doubles until a pair is found or the
    bounding box is covered, so the result equals the minimum over the full
    enumeration without paying for it.  Returns (+inf, None) when there is
    nothing to find: no admissible pairs at all (e.g. a triangle), or none
    within ``cap`` when a cap is given.
    """
    diam = _bbox_diameter(link)
    cutoff = hint if hint and hint > 0 else max(diam / 8.0, 1e-30)
    while True:
        found = critical_pairs_within(link, cutoff, min_arc_sep)
        if found:
            best = min(found, key=lambda s: (s.chord,) + s.key)
            return best.chord, best
        if cutoff > diam or (cap is not None and cutoff >= cap):
            return float("inf"), None
        cutoff *= 2.0


def thickness(link: PolyLink, hint: float | None = None) -> ThicknessReport:
    """Polygonal thickness: min of MinRad and half the least strut distance.

    Ties between the curvature and contact mechanisms report the kink, which
    keeps the governing record deterministic; the value is the same either
    way.
    """
    mrs = minrads(link)
    min_mr = float("inf")
    kink = (0, 0)
    for ci, arr in enumerate(mrs):
        k = int(np.argmin(arr))
        if arr[k] < min_mr:
            min_mr = float(arr[k])
            kink = (ci, k)
    dmin, strut = min_strut_distance(link, hint=hint)
    if dmin <= SELF_INTERSECTION_TOL:
        raise GeometryError(f"link is self-intersecting (contact distance {dmin:.3e})")
    half = dmin / 2.0
    pthi = min(min_mr, half)
    if pthi <= 0.0 or not math.isfinite(pthi):
        raise GeometryError(f"degenerate thickness {pthi}")
    governing = ("kink", kink[0], kink[1]) if min_mr <= half else ("strut", strut)
    L = total_length(link)
    return ThicknessReport(
        pthi=pthi,
        governing=governing,
        total_length=L,
        prop=L / pthi,
        min_minrad=min_mr,
        min_strut_halfdist=half,
    )


def strut_set(link: PolyLink, report: ThicknessReport | None = None,
              delta: float = DEFAULT_ACTIVE_TOL) -> list[Strut]:
    """All doubly-critical pairs with chord within delta of the thickness
    diameter, sorted lexicographically.  Multipliers are absent until solved.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if report is None:
        report = thickness(link)
    return critical_pairs_within(link, 2.0 * report.pthi + delta)
