"""Trichotomy classification and bubble extraction for finite measure sequences.

A finite sequence cannot realise ``lim_t limsup_n q_n(t)`` directly: every
concentration function reaches the total mass once ``t`` exceeds the
diameter.  Limits are therefore read on a *settled* part of the radius
grid: the leading radii where the tail curves agree within ``settle_tol``.
The level ``alpha`` is the tail max at the last settled radius.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._balls import ball_sum, indexed_ball_masses, sq_dist
from .concfun import (ATOMS, RadiusGrid, TailWindow, concentration_curve, curve_table,
                      diagonal_scales, sequence_grid)
from .measures import Ball, MeasureSequence, restrict_outside_balls

SCHEMA_VERSION = 1
SETTLE_REL = 0.05


# ------------------------------------------------------------------ phi

def phi_half(s):
    return np.asarray(s, dtype=float) / 2.0


def phi_cuberoot(s):
    # s**(1/3) alone exceeds s/2 for s < 2*sqrt(2); capping keeps phi(s) <= s/2
    s = np.asarray(s, dtype=float)
    return np.minimum(s / 2.0, np.cbrt(s))


PHI_PRESETS = {"half": phi_half, "cuberoot": phi_cuberoot}


def resolve_phi(phi):
    if callable(phi):
        return phi
    try:
        return PHI_PRESETS[phi]
    except KeyError:
        raise ValueError(f"unknown phi preset {phi!r}; choose from {sorted(PHI_PRESETS)}") from None


def check_phi(phi, samples=None):
    """Sampled check that ``phi(s) <= s/2``, ``phi`` increasing and unbounded."""
    s = np.geomspace(1e-6, 1e9, 400) if samples is None else np.asarray(samples, float)
    v = np.asarray(phi(s), dtype=float)
    if np.any(v > s / 2 * (1 + 1e-12)) or np.any(v <= 0):
        raise ValueError("phi must satisfy 0 < phi(s) <= s/2")
    if np.any(np.diff(v) <= 0):
        raise ValueError("phi must be increasing")
    # bounded phi flattens out; an unbounded one keeps growing across the samples
    if v[-1] < 10 * v[len(v) // 2]:
        raise ValueError("phi must tend to infinity")


# --------------------------------------------------------------- config

@dataclass(frozen=True)
class ExtractionConfig:
    """Knobs for classification and extraction.

    ``alpha_tol`` and ``mass_tol`` are absolute; ``None`` means 2% and 1% of
    the sequence's mass bound ``M``.  ``phi_schedule`` overrides ``phi`` for
    bubble ``i`` (1-based, the last entry repeats).  The annulus budget of
    bubble ``i`` at surviving position ``n`` is ``annulus_scale / 2**(n+i)``.
    """

    phi: object = "half"
    phi_schedule: tuple = None
    alpha_tol: float = None
    mass_tol: float = None
    k_max: int = 8
    tail: TailWindow = TailWindow()
    annulus_scale: float = 1.0
    recenter_factor: float = 12.0
    settle_tol: float = None
    settle_rel: float = SETTLE_REL
    grid: RadiusGrid = None
    min_length: int = 3
    centers: object = ATOMS

    def __post_init__(self):
        for name in ("alpha_tol", "mass_tol", "settle_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.min_length < 1:
            raise ValueError("min_length must be at least 1")
        if not self.annulus_scale > 0 or not self.recenter_factor > 1:
            raise ValueError("annulus_scale must be positive and recenter_factor above 1")
        for p in self.phis():
            check_phi(p)

    def phis(self):
        sched = self.phi_schedule or (self.phi,)
        return [resolve_phi(p) for p in sched]

    def phi_for(self, i):
        ph = self.phis()
        return ph[min(i, len(ph)) - 1]

    def tolerances(self, M):
        a = 0.02 * M if self.alpha_tol is None else self.alpha_tol
        m = 0.01 * M if self.mass_tol is None else self.mass_tol
        s = a / 4 if self.settle_tol is None else self.settle_tol
        return a, m, s

    def echo(self, M):
        a, m, s = self.tolerances(M)

        def name(p):
            return p if isinstance(p, str) else getattr(p, "__name__", "custom")

        return {
            "phi": name(self.phi),
            "phi_schedule": None if self.phi_schedule is None else [name(p) for p in self.phi_schedule],
            "alpha_tol": a,
            "mass_tol": m,
            "settle_tol": s,
            "settle_rel": self.settle_rel,
            "k_max": self.k_max,
            "tail": self.tail.size,
            "annulus_scale": self.annulus_scale,
            "recenter_factor": self.recenter_factor,
            "min_length": self.min_length,
            "center_lattice": self.centers.extra_per_axis,
        }


# ----------------------------------------------------- settled profiles

@dataclass(frozen=True, eq=False)
class SettledProfile:
    radii: np.ndarray
    limsup: np.ndarray
    oscillation: np.ndarray
    cap: int
    alpha: float
    tail_rows: np.ndarray


def escape_window(tail_size, length):
    """Rows scanned for late drops: twice the tail, within the sequence."""
    return min(length, 2 * tail_size)


def escape_cap(values, window, settle_tol, settle_rel=SETTLE_REL, start=0, totals=None):
    """Smallest radius index at which mass escaped within the last ``window`` rows.

    ``totals`` are the row masses (default: the last column of ``values``,
    right when the grid ends past the support).  Mass escapes at a radius when the deficit
    ``total - q`` rises above its running min over the window by more than
    both ``settle_tol`` and ``settle_rel`` times the total.  Mass leaving
    balls of one size late in the sequence is still on its way out of larger
    balls, so larger radii carry no evidence about the limit.  Radii below
    index ``start`` are ignored.  ``None`` when nothing escaped.
    """
    block = np.asarray(values)[-window:]
    total = block[:, -1:] if totals is None else np.asarray(totals, float)[-window:, None]
    deficit = total - block
    rise = deficit - np.minimum.accumulate(deficit, axis=0)
    fell = np.any((rise > settle_tol) & (rise > settle_rel * total), axis=0)
    fell[:start] = False
    return int(np.flatnonzero(fell)[0]) if fell.any() else None


def settled_profile(values, radii, tail_size, settle_tol, cap_limit=None, settle_rel=SETTLE_REL,
                    totals=None):
    """Tail max / oscillation per radius and the last settled radius index.

    A radius is unsettled when its tail oscillation exceeds both
    ``settle_tol`` and ``settle_rel`` times the tail max there.  Unsettled
    radii below the first settled one are skipped; the cap is the radius
    before the next unsettled one (at least index 1), and never above the
    :func:`escape_cap` over the rows of ``values`` preceding and inside the
    tail (up to :func:`escape_window` of them).
    """
    Q = np.asarray(values)
    rows = np.arange(len(Q) - tail_size, len(Q))
    block = Q[rows]
    sup = block.max(axis=0)
    osc = sup - block.min(axis=0)
    bad = (osc > settle_tol) & (osc > settle_rel * sup)
    # small-scale noise below the first settled radius does not end the plateau
    first_ok = int(np.argmax(~bad)) if (~bad).any() else len(bad)
    unsettled = np.flatnonzero(bad[first_ok:]) + first_ok
    cap = len(sup) - 1 if len(unsettled) == 0 else max(1, int(unsettled[0]) - 1)
    fell = escape_cap(Q, escape_window(tail_size, len(Q)), settle_tol, settle_rel, first_ok,
                      totals)
    if fell is not None:
        cap = min(cap, max(1, fell))
    if cap_limit is not None:
        cap = min(cap, cap_limit)
    return SettledProfile(np.asarray(radii), sup, osc, cap, float(sup[cap]), rows)


# --------------------------------------------------------------- verdict

@dataclass(frozen=True, eq=False)
class TrichotomyVerdict:
    kind: str
    alpha: float
    evidence: dict

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "evidence": _jsonable(self.evidence)}


def classify(seq, cfg=ExtractionConfig(), curves=None):
    """Vanishing / Concentration / Dichotomy from the settled tail profile.

    Concentration holds when at some settled radius ``r`` every tail index
    has ``total_n - q_n(r) < alpha_tol``.  ``curves`` may carry precomputed
    concentration curves on ``cfg.grid`` of the last :func:`escape_window`
    measures.
    """
    M = seq.mass_bound
    a_tol, _, s_tol = cfg.tolerances(M)
    if M == 0:
        return TrichotomyVerdict("Vanishing", 0.0, {"sup_ball_masses": [], "mass_bound": 0.0})
    grid = cfg.grid or sequence_grid(seq)
    size = cfg.tail.resolve(len(seq))
    window = escape_window(size, len(seq))
    tail_seq = seq.select(range(len(seq) - size, len(seq)))
    if curves is None:
        curves = [concentration_curve(seq[j], grid, cfg.centers)
                  for j in range(len(seq) - window, len(seq))]
    prof = settled_profile(np.array([c.values for c in curves]), grid.radii, size, s_tol,
                           settle_rel=cfg.settle_rel, totals=[c.total for c in curves])
    curves = curves[-size:]
    Q = np.array([c.values for c in curves])
    alpha = prof.alpha
    base = {"radii": grid.radii[: prof.cap + 1], "limsup": prof.limsup[: prof.cap + 1],
            "oscillation": prof.oscillation[: prof.cap + 1], "tail_labels": list(tail_seq.labels)}
    if alpha <= a_tol:
        return TrichotomyVerdict("Vanishing", alpha, dict(base, sup_ball_masses=Q[:, : prof.cap + 1]))
    totals = np.array([m.total for m in tail_seq])
    margins = totals[:, None] - Q[:, : prof.cap + 1]
    worst = margins.max(axis=0)
    good = np.flatnonzero(worst < a_tol)
    if len(good):
        k = int(good[0])
        centers = np.array([c.witnesses[k] for c in curves])
        return TrichotomyVerdict("Concentration", alpha, dict(
            base, radius=float(grid.radii[k]), centers=centers, margins=margins[:, k]))
    return TrichotomyVerdict("Dichotomy", alpha, dict(
        base, mass_bound=M, mass_gap=float(M - alpha), best_margin=float(worst.min())))


# ------------------------------------------------------------- the core

class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CoreResult:
    """One concentrating piece: per surviving position, center and radius."""

    positions: np.ndarray  # indices into the input sequence
    labels: tuple
    centers: np.ndarray
    radii: np.ndarray
    inner_masses: np.ndarray
    annulus_masses: np.ndarray
    budgets: np.ndarray
    alpha: float
    budget_ok: bool
    recenter_shifts: np.ndarray
    recenter_ok: bool
    concentration_ok: bool
    discards: list = field(default_factory=list)


def _witness(points, weights, cands, radius, total):
    if len(cands) == 0:
        return None, 0.0
    masses = indexed_ball_masses(points, weights, cands, [radius], total)[0]
    k = int(np.argmax(masses))
    return cands[k], float(masses[k])


def _locate(m, alpha, t, mass_tol, factor, budget_iters, excluded):
    """Search loop for a ball of radius ``<= t`` holding mass ``alpha``.

    Each attempt takes the best center at scale ``t/factor`` among atoms
    clear of earlier failed balls, and accepts when the ball of radius ``t``
    around it carries ``alpha - mass_tol``.  A failure removes that ball and
    quarters ``t``.  Returns ``(center, t, ball points, ball weights)`` or
    ``None`` once ``budget_iters`` attempts are used.
    """
    pts, w = m.points, m.weights
    free = np.ones(len(w), dtype=bool)
    for c, r in excluded:
        free &= sq_dist(pts, c) > r * r
    blocked = []
    for _ in range(budget_iters):
        if not free.any():
            return None
        fp, fw = pts[free], w[free]
        cands = fp
        for c, r in blocked:
            cands = cands[sq_dist(cands, c) > (r + t) ** 2]
        x0, _ = _witness(fp, fw, cands, t / factor, float(fw.sum()))
        if x0 is None:
            return None
        inside = sq_dist(fp, x0) <= t * t
        if math.fsum(fw[inside]) >= alpha - mass_tol:
            return x0, t, fp[inside], fw[inside]
        blocked.append((x0, t))
        free &= sq_dist(pts, x0) > t * t
        t = t / 4.0
    return None


def extract_concentrating_core(seq, cfg=ExtractionConfig(), *, grid=None, alpha=None,
                               values=None, bubble_index=1, previous=None, M=None,
                               tail_size=None, cap_limit=None):
    """Centers and radii around which ``seq`` concentrates a mass ``alpha``.

    Steps, per sequence position ``n``:

    1. scales ``t_n`` from :func:`diagonal_scales` on the curve table, with
       targets given by the settled tail profile (continued at ``alpha``
       beyond the settled radii) and, per radius, the accuracy the settled
       test allows there (at least ``mass_tol``);
    2. the search loop of :func:`_locate` for a ball of radius ``<= t_n``
       around a near-argmax center holding ``alpha``;
    3. recentering: the best center of the captured atoms at scale
       ``t/recenter_factor``, flagged if it moves further than ``2t/factor``;
    4. the radius ``r_n``: among grid radii ``<= t`` whose ball stays clear
       of the ``previous`` balls at that position and whose inner ball
       ``B(x, phi(r))`` carries ``alpha - mass_tol``, the largest one with
       the least mass in the widened annulus ``B(x, 2r) \\ B(x, phi(r))``.
       Keeping the doubled ball nearly empty leaves room for the balls of
       later bubbles.

    Positions whose annulus misses the budget are dropped when enough
    remain; radii are made nondecreasing by keeping the positions whose
    radius does not exceed any later one.
    """
    M = seq.mass_bound if M is None else M
    a_tol, m_tol, s_tol = cfg.tolerances(M)
    grid = grid or cfg.grid or sequence_grid(seq)
    radii = grid.radii
    if values is None:
        values = curve_table(seq, grid, cfg.centers)
    size = cfg.tail.resolve(len(seq)) if tail_size is None else min(tail_size, len(seq))
    prof = settled_profile(values, radii, size, s_tol, cap_limit, cfg.settle_rel,
                           [m.total for m in seq])
    if alpha is None:
        alpha = prof.alpha
    if alpha <= a_tol:
        raise ExtractionError(f"vanishing input: alpha={alpha:.6g} <= alpha_tol={a_tol:.6g}")
    phi = cfg.phi_for(bubble_index)
    targets = np.where(np.arange(len(radii)) <= prof.cap, prof.limsup, alpha)
    # accuracy per radius: what the settled test already tolerates, never below mass_tol
    tols = np.maximum(np.maximum(m_tol, s_tol), cfg.settle_rel * targets) * (1 + 1e-9)
    scales = diagonal_scales(values, targets, tols)
    budget_iters = max(1, math.ceil(M / alpha))
    previous = previous or [[] for _ in range(len(seq))]
    discards = []
    rows = []
    for pos, m in enumerate(seq):
        label = seq.labels[pos]
        k = int(scales[pos])
        if k < 0:
            discards.append({"label": label, "reason": "scale not reached"})
            continue
        found = _locate(m, alpha, float(radii[k]), m_tol, cfg.recenter_factor, budget_iters,
                        previous[pos])
        if found is None:
            discards.append({"label": label, "reason": "no ball holds alpha within budget"})
            continue
        x0, t, bp, bw = found
        x, _ = _witness(bp, bw, bp, t / cfg.recenter_factor, math.fsum(bw))
        shift = float(np.sqrt(sq_dist(x[None, :], x0)[0]))
        choice = None
        for r in radii[radii <= t][::-1]:
            if any(np.sqrt(sq_dist(x[None, :], c)[0]) <= r + rc for c, rc in previous[pos]):
                continue
            inner = ball_sum(m.points, m.weights, x, float(phi(r)), m.total)
            if inner < alpha - m_tol:
                continue
            outer = ball_sum(m.points, m.weights, x, r, m.total)
            wide = ball_sum(m.points, m.weights, x, 2 * r, m.total)
            ann = max(outer - inner, 0.0)
            spill = max(wide - inner, 0.0)
            if choice is None or spill < choice[4]:
                choice = (float(r), inner, outer, ann, spill)
                if spill == 0.0:
                    break
        if choice is None:
            discards.append({"label": label, "reason": "no admissible radius"})
            continue
        rows.append((pos, x, choice, shift, t))
    if not rows:
        raise ExtractionError("no sequence position admits a concentrating ball")

    # annulus budget per surviving position (1-based) and bubble index
    def budget_of(i):
        return cfg.annulus_scale * 2.0 ** (-(i + 1 + bubble_index))

    within = [row for i, row in enumerate(rows) if row[2][3] <= budget_of(i)]
    budget_ok = True
    if len(within) >= cfg.min_length and len(within) < len(rows):
        kept = {id(r) for r in within}
        for row in rows:
            if id(row) not in kept:
                discards.append({"label": seq.labels[row[0]], "reason": "annulus over budget"})
        rows = within
    # re-check against the renumbered positions
    budget_ok = all(row[2][3] <= budget_of(i) for i, row in enumerate(rows))
    # nondecreasing radii: keep positions not exceeding any later radius
    keep = []
    running = math.inf
    for row in reversed(rows):
        if row[2][0] <= running:
            keep.append(row)
            running = row[2][0]
        else:
            discards.append({"label": seq.labels[row[0]], "reason": "radius not monotone"})
    rows = keep[::-1]
    budget_ok = budget_ok and all(row[2][3] <= budget_of(i) for i, row in enumerate(rows))
    pos = np.array([r[0] for r in rows], dtype=int)
    inner = np.array([r[2][1] for r in rows])
    t_size = min(size, len(rows))
    tail_inner = inner[-t_size:]
    shifts = np.array([r[3] for r in rows])
    t_used = np.array([r[4] for r in rows])
    return CoreResult(
        positions=pos,
        labels=tuple(seq.labels[p] for p in pos),
        centers=np.array([r[1] for r in rows]),
        radii=np.array([r[2][0] for r in rows]),
        inner_masses=inner,
        annulus_masses=np.array([r[2][3] for r in rows]),
        budgets=np.array([budget_of(i) for i in range(len(rows))]),
        alpha=float(alpha),
        budget_ok=bool(budget_ok),
        recenter_shifts=shifts,
        recenter_ok=bool(np.all(shifts <= 2 * t_used / cfg.recenter_factor)),
        concentration_ok=bool(tail_inner.max() - tail_inner.min() <= m_tol),
        discards=discards,
    )


# ------------------------------------------------------------- reports

@dataclass(frozen=True, eq=False)
class Bubble:
    index: int
    labels: tuple
    centers: np.ndarray
    radii: np.ndarray
    mass: float
    inner_masses: np.ndarray
    annulus_masses: np.ndarray
    budgets: np.ndarray
    phi_radii: np.ndarray
    concentration_ok: bool
    budget_ok: bool
    recenter_ok: bool

    def balls(self):
        return [Ball(c, r) for c, r in zip(self.centers, self.radii)]

    def restricted_to(self, labels):
        keep = np.array([lab in set(labels) for lab in self.labels], dtype=bool)
        return Bubble(self.index, tuple(np.array(self.labels)[keep].tolist()),
                      self.centers[keep], self.radii[keep], self.mass,
                      self.inner_masses[keep], self.annulus_masses[keep], self.budgets[keep],
                      self.phi_radii[keep], self.concentration_ok, self.budget_ok,
                      self.recenter_ok)

    def to_dict(self):
        return {
            "i": self.index,
            "mass": self.mass,
            "labels": list(self.labels),
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "inner_radii": self.phi_radii.tolist(),
            "inner_masses": self.inner_masses.tolist(),
            "annulus_masses": self.annulus_masses.tolist(),
            "annulus_budgets": self.budgets.tolist(),
            "concentration_ok": self.concentration_ok,
            "budget_ok": self.budget_ok,
            "recenter_ok": self.recenter_ok,
        }


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    verdict: str
    alpha: float
    outcome: str  # remainder_vanishing | truncated | scale_exhausted
    indices: tuple
    bubbles: list
    alphas: list
    remainder_score: float
    disjointness_ok: bool
    mass_bound: float
    config_echo: dict
    discards: list
    remainder: MeasureSequence = None

    @property
    def truncated(self):
        return self.outcome == "truncated"

    @property
    def ledger(self):
        s = math.fsum(b.mass for b in self.bubbles)
        return {"sum_m": s, "M": self.mass_bound, "slack": self.mass_bound - s}

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "verdict": self.verdict,
            "alpha": self.alpha,
            "outcome": self.outcome,
            "indices": list(self.indices),
            "bubbles": [b.to_dict() for b in self.bubbles],
            "alphas": list(self.alphas),
            "remainder_score": self.remainder_score,
            "disjointness_ok": self.disjointness_ok,
            "ledger": self.ledger,
            "config_echo": self.config_echo,
            "discards": self.discards,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ----------------------------------------------------------- operations

def disjointness_check(bubbles, at_index):
    """Whether the bubble balls at sequence label ``at_index`` are pairwise disjoint.

    Returns ``(ok, violations)`` with 1-based bubble pairs ``(i, j)``.
    """
    balls = []
    for b in bubbles:
        if at_index in b.labels:
            k = b.labels.index(at_index)
            balls.append((b.index, b.centers[k], b.radii[k]))
    bad = []
    for a in range(len(balls)):
        for c in range(a + 1, len(balls)):
            ia, xa, ra = balls[a]
            ic, xc, rc = balls[c]
            if not np.linalg.norm(xa - xc) > ra + rc:
                bad.append((ia, ic))
    return not bad, bad


def vanishing_score(seq, balls_per_index, grid=None, tail=TailWindow(), settle_tol=None,
                    cap_limit=None, centers=ATOMS, settle_rel=SETTLE_REL):
    """Settled concentration level of the measures with the given balls removed.

    ``settle_tol`` defaults to the extraction default, half a percent of
    the sequence's mass bound.
    """
    if len(balls_per_index) != len(seq):
        raise ValueError("one ball list per sequence index is required")
    rem = MeasureSequence(tuple(restrict_outside_balls(m, bl) for m, bl in zip(seq, balls_per_index)),
                          seq.labels)
    if rem.mass_bound == 0:
        return 0.0
    grid = grid or sequence_grid(seq)
    size = tail.resolve(len(rem))
    window = escape_window(size, len(rem))
    Q = curve_table(rem.select(range(len(rem) - window, len(rem))), grid, centers)
    if settle_tol is None:
        settle_tol = ExtractionConfig().tolerances(seq.mass_bound)[2]
    totals = [m.total for m in rem][len(rem) - window:]
    return settled_profile(Q, grid.radii, size, settle_tol, cap_limit, settle_rel, totals).alpha


def extract_profiles(seq, cfg=ExtractionConfig()):
    """Peel concentrating pieces off ``seq`` until the remainder vanishes.

    Level ``l`` reads the settled level ``alpha_l`` of the current remainder
    (never past the previous level's settled radius).  It stops when
    ``alpha_l <= alpha_tol``; otherwise the core gives balls clear of all
    earlier ones, the bubble mass ``m`` is the tail mean of the inner masses
    and must exceed ``alpha_l / 2``, positions the core discards leave the
    subsequence, and the remainder loses the new balls.  After ``k_max``
    bubbles the report is marked truncated.
    """
    M = seq.mass_bound
    a_tol, m_tol, s_tol = cfg.tolerances(M)
    echo = cfg.echo(M)
    if M == 0:
        return DecompositionReport("Vanishing", 0.0, "remainder_vanishing", seq.labels, [], [0.0],
                                   0.0, True, 0.0, echo, [], seq)
    grid = cfg.grid or sequence_grid(seq)
    echo["grid"] = [float(grid.radii[0]), float(grid.radii[-1]), len(grid)]
    tail_size = cfg.tail.resolve(len(seq))
    first = [concentration_curve(m, grid, cfg.centers) for m in seq]
    verdict = classify(seq, replace(cfg, grid=grid), curves=first[len(seq) - escape_window(tail_size, len(seq)):])
    current = seq
    balls = [[] for _ in range(len(seq))]
    bubbles, alphas, discards = [], [], []
    cap = None
    outcome = None
    while True:
        if first is not None:
            values, first = np.array([c.values for c in first]), None
        else:
            values = curve_table(current, grid, cfg.centers)
        size = min(tail_size, len(current))
        prof = settled_profile(values, grid.radii, size, s_tol, cap, cfg.settle_rel,
                               [m.total for m in current])
        cap = prof.cap
        alphas.append(prof.alpha)
        if prof.alpha <= a_tol:
            outcome = "remainder_vanishing"
            break
        if len(bubbles) == cfg.k_max:
            outcome = "truncated"
            break
        level = len(bubbles) + 1
        try:
            core = extract_concentrating_core(current, cfg, grid=grid, alpha=prof.alpha,
                                              values=values, bubble_index=level, previous=balls,
                                              M=M, tail_size=size, cap_limit=cap)
        except ExtractionError as exc:
            discards.append({"level": level, "label": None, "reason": str(exc)})
            outcome = "scale_exhausted"
            break
        if len(core.positions) < cfg.min_length:
            discards.append({"level": level, "label": None,
                             "reason": f"only {len(core.positions)} positions survive"})
            outcome = "scale_exhausted"
            break
        t = min(size, len(core.inner_masses))
        mass = float(np.mean(core.inner_masses[-t:]))
        if not mass > prof.alpha / 2:
            discards.append({"level": level, "label": None,
                             "reason": f"mass {mass:.6g} fails the half-mass rule"})
            outcome = "scale_exhausted"
            break
        for d in core.discards:
            discards.append(dict(d, level=level))
        phi = cfg.phi_for(level)
        bubbles.append(Bubble(level, core.labels, core.centers, core.radii, mass,
                              core.inner_masses, core.annulus_masses, core.budgets,
                              np.asarray(phi(core.radii), dtype=float), core.concentration_ok,
                              core.budget_ok, core.recenter_ok))
        new_balls = [balls[p] + [(core.centers[k], float(core.radii[k]))]
                     for k, p in enumerate(core.positions)]
        current = MeasureSequence(
            tuple(restrict_outside_balls(current[p], [Ball(core.centers[k], core.radii[k])])
                  for k, p in enumerate(core.positions)),
            core.labels)
        balls = new_balls
    labels = current.labels
    bubbles = [b.restricted_to(labels) for b in bubbles]
    disjoint = all(disjointness_check(bubbles, n)[0] for n in labels)
    return DecompositionReport(
        verdict=verdict.kind, alpha=verdict.alpha, outcome=outcome, indices=labels,
        bubbles=bubbles, alphas=alphas, remainder_score=alphas[-1], disjointness_ok=disjoint,
        mass_bound=M, config_echo=echo, discards=discards, remainder=current)
