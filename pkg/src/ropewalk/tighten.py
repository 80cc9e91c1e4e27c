"""Length minimization under thickness constraints.

The tightener fixes a target thickness tau and minimizes total length
subject to every strut chord staying >= 2*tau and every vertex MinRad
staying >= tau.  Each iteration collects the active constraints, solves a
nonnegative least-squares problem for their multipliers, steps along the
projected descent direction with a backtracking line search, and projects
back onto the feasible set with Gauss-Newton corrections.  Periodic
arclength resampling keeps the polygons nearly equilateral.

The outer loop is strictly sequential and has no randomness: identical
inputs produce bit-identical step logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .links import GeometryError, PolyLink, minrads, total_length
from .contacts import (
    Strut,
    ThicknessReport,
    _critical_records_within,
    critical_pairs_within,
    thickness,
)
from .gradients import (
    length_gradient,
    minrad_branch_rows_batch,
    minrad_gradient_entries,
    strut_gradient_entries,
    strut_rows_batch,
)

__all__ = [
    "TightenConfig",
    "ActiveConstraint",
    "ActiveSet",
    "StepReport",
    "FeasibilityError",
    "SolverError",
    "collect_active",
    "solve_multipliers",
    "restore_feasibility",
    "equilateralize",
    "step",
    "tighten",
    "nnls",
]


class FeasibilityError(RuntimeError):
    """Input violates the thickness constraints beyond tolerance."""


class SolverError(RuntimeError):
    """A numerical subroutine failed to converge."""


@dataclass(frozen=True)
class TightenConfig:
    tau: float = 0.5                 # tube radius; diameter 2*tau = 1 by default
    active_tol: float = 1e-5         # constraint counts as active within this
    max_steps: int = 1000
    step_init: Optional[float] = None  # None: 0.1 * average edge length
    step_shrink: float = 0.5
    feas_tol: Optional[float] = None   # None: 1e-9 * tau
    grad_tol: float = 1e-4
    resample_every: int = 50         # accepted steps between resamplings; 0 = never
    rng_seed: int = 0                # reserved for randomized tie-breaks (none today)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not (0 < self.step_shrink < 1):
            raise ValueError("step_shrink must be in (0, 1)")
        for name in ("active_tol", "grad_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feas_tol is not None and self.feas_tol <= 0:
            raise ValueError("feas_tol must be positive")
        if self.step_init is not None and self.step_init <= 0:
            raise ValueError("step_init must be positive")

    @property
    def feas_tolerance(self) -> float:
        return self.feas_tol if self.feas_tol is not None else 1e-9 * self.tau

    def initial_step(self, link: PolyLink) -> float:
        if self.step_init is not None:
            return self.step_init
        return 0.1 * total_length(link) / link.num_edges


@dataclass(frozen=True)
class ActiveConstraint:
    """One active inequality: either a strut chord or a vertex MinRad.

    ``value`` is the clearance (chord - 2*tau, or MinRad - tau); ``ids`` and
    ``rows`` are the sparse support of its clearance gradient.
    """

    kind: str                        # "strut" | "kink"
    ref: object                      # strut: Strut; kink: (comp, vert)
    value: float
    ids: np.ndarray
    rows: np.ndarray
    multiplier: Optional[float] = None

    @property
    def identity(self) -> tuple:
        if self.kind == "strut":
            s = self.ref
            return ("strut", s.comp_a, s.edge_a, s.comp_b, s.edge_b)
        return ("kink",) + tuple(self.ref)


@dataclass
class ActiveSet:
    constraints: list[ActiveConstraint] = field(default_factory=list)
    multipliers: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.constraints)

    @property
    def n_struts(self) -> int:
        return sum(1 for c in self.constraints if c.kind == "strut")

    @property
    def n_kinks(self) -> int:
        return sum(1 for c in self.constraints if c.kind == "kink")

    @property
    def struts(self) -> list[Strut]:
        return [c.ref for c in self.constraints if c.kind == "strut"]

    def matrix(self, nvert: int) -> sp.csc_matrix:
        """Clearance gradients as sparse columns over the 3N coordinates."""
        rows, cols, vals = [], [], []
        for k, con in enumerate(self.constraints):
            flat = (con.ids[:, None] * 3 + np.arange(3)[None, :]).ravel()
            rows.append(flat)
            cols.append(np.full(flat.shape, k, dtype=np.intp))
            vals.append(con.rows.ravel())
        if not rows:
            return sp.csc_matrix((3 * nvert, 0))
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(3 * nvert, len(self.constraints)),
        )

    def with_multipliers(self, lam: np.ndarray) -> "ActiveSet":
        cons = [replace(c, multiplier=float(l)) for c, l in zip(self.constraints, lam)]
        out = ActiveSet(cons)
        out.multipliers = np.asarray(lam, dtype=float)
        return out

    def solved_struts(self) -> list[Strut]:
        return [c.ref.with_multiplier(c.multiplier)
                for c in self.constraints if c.kind == "strut"]


@dataclass(frozen=True)
class StepReport:
    step_index: int
    length_before: float
    length_after: float
    pthi_before: float
    pthi_after: float
    n_active_struts: int
    n_active_kinks: int
    projected_grad_norm: float
    step_size: float
    accepted: bool

    CSV_HEADER = ("step,length_before,length_after,pthi_before,pthi_after,"
                  "n_active_struts,n_active_kinks,projected_grad_norm,"
                  "step_size,accepted")

    def csv_row(self) -> str:
        return ",".join([
            str(self.step_index),
            repr(self.length_before), repr(self.length_after),
            repr(self.pthi_before), repr(self.pthi_after),
            str(self.n_active_struts), str(self.n_active_kinks),
            repr(self.projected_grad_norm), repr(self.step_size),
            "1" if self.accepted else "0",
        ])


# ---------------------------------------------------------------------------
# Feasibility and active-set assembly
# ---------------------------------------------------------------------------

def _worst_violation(link: PolyLink, cfg: TightenConfig):
    """(amount, description) of the deepest constraint violation; 0 if none."""
    worst = 0.0
    desc = "none"
    for ci, arr in enumerate(minrads(link)):
        k = int(np.argmin(arr))
        viol = cfg.tau - float(arr[k])
        if viol > worst:
            worst = viol
            desc = f"MinRad {arr[k]:.12g} < tau at component {ci}, vertex {k}"
    gi, gj, u, v, d = _critical_records_within(link, 2.0 * cfg.tau)
    if len(d):
        k = int(np.argmin(d))
        viol = 2.0 * cfg.tau - float(d[k])
        if viol > worst:
            et = link.edge_tables
            worst = viol
            desc = (f"strut chord {d[k]:.12g} < 2*tau between "
                    f"({et.comp[gi[k]]},{et.index[gi[k]]}) and "
                    f"({et.comp[gj[k]]},{et.index[gj[k]]})")
    return worst, desc


def collect_active(link: PolyLink, cfg: TightenConfig) -> ActiveSet:
    """Struts within active_tol of chord 2*tau and vertices within it of
    MinRad tau, with clearance gradients attached; struts come first in
    lexicographic edge order, then kinks by (component, vertex)."""
    worst, desc = _worst_violation(link, cfg)
    if worst > cfg.feas_tolerance:
        raise FeasibilityError(
            f"infeasible by {worst:.3e} (tolerance {cfg.feas_tolerance:.3e}): {desc}")

    cons: list[ActiveConstraint] = []
    for s in critical_pairs_within(link, 2.0 * cfg.tau + cfg.active_tol):
        ids, rows = strut_gradient_entries(link, s)
        cons.append(ActiveConstraint("strut", s, s.chord - 2.0 * cfg.tau, ids, rows))
    for ci, arr in enumerate(minrads(link)):
        for k in np.nonzero(arr <= cfg.tau + cfg.active_tol)[0]:
            ids, rows = minrad_gradient_entries(link, ci, int(k))
            cons.append(ActiveConstraint("kink", (ci, int(k)),
                                         float(arr[k]) - cfg.tau, ids, rows))
    return ActiveSet(cons)


# ---------------------------------------------------------------------------
# Nonnegative least squares (active-set, warm-startable)
# ---------------------------------------------------------------------------

def _solve_psd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve G z = rhs for symmetric positive semidefinite G by Cholesky,
    escalating a tiny ridge until the factorization succeeds.

    The ridge bias (starting at 1e-14 of the diagonal scale) sits far below
    every solver tolerance, and rank-deficient systems (duplicated contact
    rows) get a well-defined damped solution instead of an SVD fallback.
    """
    n = len(G)
    if n == 0:
        return np.zeros(0)
    diag_scale = max(1.0, float(np.max(np.diag(G))))
    ridge = 0.0
    for _ in range(12):
        try:
            M = G if ridge == 0.0 else G + ridge * np.eye(n)
            cf = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
            z = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
            if np.all(np.isfinite(z)):
                return z
        except scipy.linalg.LinAlgError:
            pass
        ridge = 1e-14 * diag_scale if ridge == 0.0 else ridge * 100.0
    return np.linalg.lstsq(G, rhs, rcond=None)[0]


def nnls(gram: np.ndarray, atb: np.ndarray, support: np.ndarray | None = None,
         max_iter: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve min ||A x - b||, x >= 0, given G = A'A and A'b.

    Classical active-set iteration with exact KKT at termination: the dual
    w = A'(b - Ax) is <= tolerance off the support and ~0 on it.  ``support``
    warm-starts the passive set, which keeps the cost per tightening step low
    because the contact structure changes slowly between steps.
    """
    m = len(atb)
    x = np.zeros(m)
    P = np.zeros(m, dtype=bool)
    if m == 0:
        return x, P
    if max_iter is None:
        max_iter = 10 * m + 100
    wtol = 1e-9 * max(float(np.max(np.abs(atb))), 1.0)

    def feasible_solve(P):
        """Unconstrained solve on the passive set, clipped back to x >= 0
        by stepping to the nearest bound and shrinking the set (inner loop)."""
        nonlocal x
        for _ in range(max_iter):
            idx = np.nonzero(P)[0]
            if len(idx) == 0:
                x = np.zeros(m)
                return P
            z = _solve_psd(gram[np.ix_(idx, idx)], atb[idx])
            if np.min(z) > 0.0:
                x = np.zeros(m)
                x[idx] = z
                return P
            xs = x[idx]
            neg = z <= 0.0
            denom = xs - z
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg & (denom > 0.0), xs / denom, np.inf)
            jstar = int(np.argmin(ratios))
            alpha = min(1.0, max(0.0, float(ratios[jstar])))
            xs = xs + alpha * (z - xs)
            xs[jstar] = 0.0
            drop = xs <= 0.0
            x = np.zeros(m)
            x[idx] = np.where(drop, 0.0, xs)
            P = P.copy()
            P[idx[drop]] = False
        raise SolverError("nonnegative least squares: inner loop stalled")

    if support is not None and support.any():
        # Warm start: no feasible iterate exists yet, so a clip-and-resolve
        # sweep (dropping every non-positive coordinate at once) beats the
        # one-at-a-time boundary walk.
        P = support.copy()
        for _ in range(max_iter):
            idx = np.nonzero(P)[0]
            if len(idx) == 0:
                break
            z = _solve_psd(gram[np.ix_(idx, idx)], atb[idx])
            neg = z <= 0.0
            if not neg.any():
                x = np.zeros(m)
                x[idx] = z
                break
            P[idx[neg]] = False

    banned = np.zeros(m, dtype=bool)   # columns that degenerately refuse to enter
    for _ in range(max_iter):
        w = atb - gram @ x
        w[P | banned] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= wtol:
            return x, P
        P2 = P.copy()
        P2[j] = True
        x_old = x.copy()
        P = feasible_solve(P2)
        if not P[j] and np.array_equal(x, x_old):
            banned[j] = True   # numerically degenerate column; final KKT check decides
    raise SolverError(
        f"nonnegative least squares did not converge within {max_iter} iterations "
        f"(max dual {float(np.max(atb - gram @ x)):.3e}, tol {wtol:.3e})")


def solve_multipliers(active: ActiveSet, neg_length_grad: np.ndarray,
                      warm_keys: Optional[set] = None):
    """Contact forces and projected descent direction at the current iterate.

    Solves min || sum_k lambda_k grad c_k - grad L || over lambda >= 0, where
    the c_k are the active clearances; the projected direction
    sum_k lambda_k grad c_k - grad L is a length-descent direction that does
    not decrease any positive-multiplier clearance to first order.  KKT is
    verified (lambda >= 0; residual orthogonal to supported gradients within
    1e-8 * |grad L|) and SolverError raised on failure.

    Returns (lambda, projected field, identity keys of the support) so the
    support can warm-start the next call even as the active set changes.
    """
    neg_flat = np.asarray(neg_length_grad, dtype=float).ravel()
    b = -neg_flat                      # = grad L
    if len(active) == 0:
        return np.zeros(0), neg_flat.copy().reshape(-1, 3), set()

    A = active.matrix(len(neg_flat) // 3)
    gram = (A.T @ A).toarray()
    atb = A.T @ b
    support0 = None
    if warm_keys:
        support0 = np.array([c.identity in warm_keys for c in active.constraints])
    lam, sup = nnls(gram, atb, support=support0)

    resid = b - A @ lam               # grad L - sum lambda grad c
    projected = -resid
    gnorm = float(np.linalg.norm(b))
    corr = A.T @ resid
    bad = (lam > 0) & (np.abs(corr) > 1e-8 * max(gnorm, 1e-30))
    if np.any(bad):
        k = int(np.nonzero(bad)[0][0])
        raise SolverError(
            f"KKT violation: residual correlation {corr[k]:.3e} on constraint {k} "
            f"with multiplier {lam[k]:.3e} (gradient norm {gnorm:.3e})")
    keys = {c.identity for c, l in zip(active.constraints, lam) if l > 0}
    return lam, projected.reshape(-1, 3), keys


# ---------------------------------------------------------------------------
# Feasibility restoration and resampling
# ---------------------------------------------------------------------------

def _correction_rows(link: PolyLink, cfg: TightenConfig, band: float):
    """Constraints within ``band`` of their surface, as stacked (target,
    ids, rows) arrays ready for sparse assembly.

    Violated constraints get a positive target (the push back to the
    surface); the rest are guards with target 0.  Guards keep the least-norm
    correction from shoving just-feasible neighbors below the surface, which
    otherwise makes the violated set ping-pong instead of converging.

    MinRad takes the smaller of two per-edge radii and is non-smooth where
    they tie, which defeats a Gauss-Newton model built on the min.  Each
    branch is smooth, and both branches >= tau force the min there, so every
    branch inside the band contributes its own row.
    """
    targets = []
    ids_parts = []
    rows_parts = []
    widths = []

    gi, gj, u, v, d = _critical_records_within(link, 2.0 * cfg.tau + band)
    if len(d):
        sids, srows = strut_rows_batch(link, gi, gj, u, v, d)
        targets.append(np.maximum(0.0, 2.0 * cfg.tau - d))
        ids_parts.append(sids)
        rows_parts.append(srows)
        widths.append(4)

    mr_flat = np.concatenate(minrads(link))
    sel = np.nonzero(mr_flat < cfg.tau + band)[0]
    if len(sel):
        kids, (vp, rp), (vn, rn) = minrad_branch_rows_batch(link, sel)
        for value, rows in ((vp, rp), (vn, rn)):
            near = value < cfg.tau + band
            if near.any():
                targets.append(np.maximum(0.0, cfg.tau - value[near]))
                ids_parts.append(kids[near])
                rows_parts.append(rows[near])
                widths.append(3)

    if not targets:
        return 0.0, None
    r = np.concatenate(targets)
    worst = float(r.max()) if len(r) else 0.0
    return worst, (r, ids_parts, rows_parts, widths)


def restore_feasibility(link: PolyLink, cfg: TightenConfig,
                        max_rounds: int = 50) -> PolyLink:
    """Project back onto the feasible set with Gauss-Newton corrections.

    Repeatedly solves the linearized system "violated chords = 2*tau,
    violated MinRads = tau" in least-norm sense (with zero-target guard rows
    for constraints just above their surface) until the deepest violation is
    within feas_tol.  Quadratic local convergence makes a few rounds typical;
    a stall or divergence raises FeasibilityError so the caller can retry the
    descent step with a smaller trial displacement.
    """
    tol = cfg.feas_tolerance
    first_worst = None
    band = 64.0 * tol
    for _ in range(max_rounds):
        worst, packed = _correction_rows(link, cfg, band=band)
        if worst <= tol:
            return link
        if first_worst is None:
            first_worst = worst
        elif worst > 4.0 * first_worst:
            break    # diverging; give up before mangling the polygon
        if 8.0 * worst > band:
            band = 8.0 * worst
            worst, packed = _correction_rows(link, cfg, band=band)
        band = max(8.0 * worst, 64.0 * tol)
        r, ids_parts, rows_parts, widths = packed
        nv = link.num_vertices
        rr, cc, vv = [], [], []
        row0 = 0
        for ids, rows, w in zip(ids_parts, rows_parts, widths):
            m = len(ids)
            rr.append(np.repeat(np.arange(row0, row0 + m, dtype=np.intp), 3 * w))
            flat = (ids[:, :, None] * 3 + np.arange(3)[None, None, :])
            cc.append(flat.ravel())
            vv.append(rows.ravel())
            row0 += m
        J = sp.csr_matrix(
            (np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
            shape=(row0, 3 * nv),
        )
        JJt = (J @ J.T).toarray()
        # Levenberg-Marquardt damping: contact fans (many struts sharing a
        # vertex) make JJt nearly singular, and the raw least-norm update can
        # run far along the null directions.  A correction should move
        # points by about the violation itself, so damp until it does.
        cap = 32.0 * max(worst, tol)
        eye = np.eye(len(JJt))
        ridge = 1e-12 * max(1.0, float(np.max(np.diag(JJt))))
        for _ in range(40):
            try:
                cf = scipy.linalg.cho_factor(JJt + ridge * eye, lower=True,
                                             check_finite=False)
                y = scipy.linalg.cho_solve(cf, r, check_finite=False)
            except scipy.linalg.LinAlgError:
                ridge *= 100.0
                continue
            delta = J.T @ y            # approximate least-norm J delta = r
            if float(np.max(np.abs(delta))) <= cap:
                break
            ridge *= 10.0
        moved = link.stacked_vertices + delta.reshape(-1, 3)
        link = link.with_vertices(moved)
    worst, desc = _worst_violation(link, cfg)
    if worst <= tol:
        return link
    raise FeasibilityError(
        f"feasibility restoration stalled at violation {worst:.3e}: {desc}")


def equilateralize(link: PolyLink) -> PolyLink:
    """Redistribute each component's vertices uniformly by arclength.

    Piecewise-linear resampling along the current polygon, anchored at each
    component's first vertex; vertex counts are preserved.
    """
    comps = []
    for c in link.components:
        v = c.vertices
        n = len(v)
        seg = c.edge_lengths
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        L = cum[-1]
        targets = np.arange(n) * (L / n)
        idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, n - 1)
        frac = (targets - cum[idx]) / seg[idx]
        ring = np.vstack([v, v[:1]])
        comps.append(ring[idx] + frac[:, None] * (ring[idx + 1] - ring[idx]))
    return PolyLink(comps)


# ---------------------------------------------------------------------------
# Descent step and outer loop
# ---------------------------------------------------------------------------

def step(link: PolyLink, cfg: TightenConfig, active: ActiveSet,
         projected: np.ndarray, step_index: int = 0,
         pthi_before: float | None = None,
         t_start: float | None = None) -> tuple[PolyLink, StepReport]:
    """One backtracking line-search step along the projected direction.

    The trial displacement is t * projected, with t halved until the length
    strictly decreases after feasibility restoration.  ``t_start`` lets the
    caller warm-start the search below the configured initial step (the
    tightener passes twice the previously accepted size, which saves most
    of the discarded trials near convergence).  Underflow of t means no
    progress is possible at this precision; the step is then reported as
    rejected, a valid terminal outcome rather than an error.
    """
    length0 = total_length(link)
    if pthi_before is None:
        pthi_before = thickness(link, hint=2.5 * cfg.tau).pthi
    gnorm = float(np.linalg.norm(projected))
    t0 = cfg.initial_step(link)
    t = t0 if t_start is None else min(t0, t_start)
    accepted = False
    new_link = link
    while t > 1e-12 * t0:
        trial = link.with_vertices(link.stacked_vertices + t * projected)
        try:
            fixed = restore_feasibility(trial, cfg)
        except (FeasibilityError, GeometryError):
            t *= cfg.step_shrink
            continue
        if total_length(fixed) < length0:
            accepted = True
            new_link = fixed
            break
        t *= cfg.step_shrink

    pthi_after = thickness(new_link, hint=2.5 * cfg.tau).pthi if accepted else pthi_before
    report = StepReport(
        step_index=step_index,
        length_before=length0,
        length_after=total_length(new_link) if accepted else length0,
        pthi_before=pthi_before,
        pthi_after=pthi_after,
        n_active_struts=active.n_struts,
        n_active_kinks=active.n_kinks,
        projected_grad_norm=gnorm,
        step_size=t if accepted else 0.0,
        accepted=accepted,
    )
    return new_link, report


def tighten(link: PolyLink, cfg: TightenConfig = TightenConfig(),
            callback: Optional[Callable[[PolyLink, StepReport], bool]] = None,
            ) -> tuple[PolyLink, ThicknessReport, list[StepReport], ActiveSet]:
    """Tighten a link: rescale so its thickness equals tau, then iterate
    collect_active -> solve_multipliers -> step (with periodic resampling)
    until the projected gradient is small or the step budget runs out.

    Returns the final configuration, its thickness report, the step log, and
    the final active set with solved multipliers.  ``callback(link, report)``
    runs after every accepted step; returning True stops early.
    """
    rep0 = thickness(link)
    link = link.with_vertices(link.stacked_vertices * (cfg.tau / rep0.pthi))

    reports: list[StepReport] = []
    warm: set = set()
    accepted_since_resample = 0
    pthi_current: float | None = None
    t_carry: float | None = None
    for k in range(cfg.max_steps):
        active = collect_active(link, cfg)
        lam, projected, warm = solve_multipliers(active, -length_gradient(link), warm)
        gnorm = float(np.linalg.norm(projected))
        if gnorm <= cfg.grad_tol:
            break

        resample_due = (cfg.resample_every > 0
                        and accepted_since_resample >= cfg.resample_every)
        near_convergence = len(active) > 0 and gnorm < 10.0 * cfg.grad_tol
        if resample_due and not near_convergence:
            # Resampling shifts vertices slightly off the contact surfaces;
            # a uniform rescale to thickness tau absorbs the bulk violation
            # before the Gauss-Newton cleanup.
            resampled = equilateralize(link)
            rs = thickness(resampled, hint=2.5 * cfg.tau)
            resampled = resampled.with_vertices(
                resampled.stacked_vertices * (cfg.tau / rs.pthi))
            link = restore_feasibility(resampled, cfg)
            accepted_since_resample = 0
            pthi_current = None
            active = collect_active(link, cfg)
            lam, projected, warm = solve_multipliers(active, -length_gradient(link), warm)
            gnorm = float(np.linalg.norm(projected))
            if gnorm <= cfg.grad_tol:
                break

        link, report = step(link, cfg, active, projected,
                            step_index=k, pthi_before=pthi_current,
                            t_start=t_carry)
        reports.append(report)
        if not report.accepted:
            break
        t_carry = 2.0 * report.step_size
        pthi_current = report.pthi_after
        accepted_since_resample += 1
        if callback is not None and callback(link, report):
            break

    final_report = thickness(link)
    final_active = collect_active(link, cfg)
    lam, _, _ = solve_multipliers(final_active, -length_gradient(link), warm)
    final_active = final_active.with_multipliers(lam)
    return link, final_report, reports, final_active
