"""Concentration functions ``q(t) = sup_x mu(B(x, t))`` and their sequence limits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._balls import brute_ball_masses, indexed_ball_masses

BRUTE_FORCE_LIMIT = 5000
DEFAULT_GRID_POINTS = 32


@dataclass(frozen=True, eq=False)
class RadiusGrid:
    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(r) < 2:
            raise ValueError("a radius grid needs at least two radii")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ValueError("radii must be positive and finite")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")
        r.flags.writeable = False
        object.__setattr__(self, "radii", r)

    def __len__(self):
        return len(self.radii)

    @classmethod
    def geometric(cls, lo, hi, count=DEFAULT_GRID_POINTS):
        return cls(np.geomspace(lo, hi, count))

    def capped(self, k):
        """Grid of the first ``k + 1`` radii."""
        return RadiusGrid(self.radii[: k + 1])


def _extent(points):
    """(smallest positive nearest-neighbour distance, bounding-box diagonal)."""
    if len(points) < 2:
        return None, 0.0
    diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    d, _ = cKDTree(points).query(points, k=2)
    nn = d[:, 1]
    nn = nn[nn > 0]
    if len(nn) == 0:
        # all atoms coincide; fall back on the next distinct neighbour if any
        return None, diag
    return float(nn.min()), diag


def default_grid(m_or_points, count=DEFAULT_GRID_POINTS):
    """Geometric grid from half the closest atom spacing to twice the diameter.

    Degenerate clouds (fewer than two distinct atoms) get the span ``[0.5, 2]``.
    """
    pts = getattr(m_or_points, "points", m_or_points)
    pts = np.asarray(pts, dtype=float)
    lo, diag = _extent(pts)
    if lo is None:
        lo, hi = 0.5, max(2.0, 2.0 * diag)
        return RadiusGrid.geometric(lo, hi, count)
    lo = lo / 2.0
    hi = max(2.0 * diag, 4.0 * lo)
    return RadiusGrid.geometric(lo, hi, count)


def sequence_grid(seq, count=DEFAULT_GRID_POINTS):
    """One grid for a whole sequence: finest spacing to widest diameter."""
    los, his = [], []
    for m in seq:
        lo, diag = _extent(m.points)
        if lo is not None:
            los.append(lo / 2.0)
        his.append(2.0 * diag)
    if not los:
        return RadiusGrid.geometric(0.5, max(2.0, max(his)), count)
    lo = min(los)
    return RadiusGrid.geometric(lo, max(max(his), 4.0 * lo), count)


@dataclass(frozen=True)
class CenterStrategy:
    """Candidate centers for the sup: the atoms, plus an optional uniform lattice.

    ``extra_per_axis`` lattice nodes per axis are laid over the bounding box
    and appended after the atoms, so atom witnesses win ties.
    """

    extra_per_axis: int = 0

    def centers(self, m):
        pts = m.points
        if self.extra_per_axis <= 0 or len(pts) == 0:
            return pts
        axes = [np.linspace(lo, hi, self.extra_per_axis)
                for lo, hi in zip(pts.min(axis=0), pts.max(axis=0))]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
        return np.concatenate([pts, lattice])


ATOMS = CenterStrategy()


@dataclass(frozen=True, eq=False)
class ConcentrationCurve:
    """Sampled concentration function with one argmax center per radius."""

    radii: RadiusGrid
    values: np.ndarray
    witnesses: np.ndarray
    total: float

    def __len__(self):
        return len(self.values)

    @property
    def final(self):
        return float(self.values[-1])

    def same_as(self, other):
        return (
            np.array_equal(self.radii.radii, other.radii.radii)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.witnesses, other.witnesses)
            and self.total == other.total
        )

    def to_csv(self, path):
        dim = self.witnesses.shape[1]
        head = ["radius", "value"] + [f"witness_x{k + 1}" for k in range(dim)]
        with open(path, "w") as fh:
            fh.write(",".join(head) + "\n")
            for r, v, w in zip(self.radii.radii, self.values, self.witnesses):
                fh.write(",".join(repr(float(x)) for x in (r, v, *w)) + "\n")


def _as_grid(grid):
    return grid if isinstance(grid, RadiusGrid) else RadiusGrid(grid)


def _curve_from_table(m, grid, centers, table):
    if table.shape[1] == 0:
        return ConcentrationCurve(grid, np.zeros(len(grid)), np.zeros((len(grid), m.dim)), m.total)
    # argmax returns the first maximal entry: lowest candidate index wins
    best = np.argmax(table, axis=1)
    values = table[np.arange(len(grid)), best]
    return ConcentrationCurve(grid, values, centers[best].copy(), m.total)


def concentration_curve(m, grid=None, centers=ATOMS):
    """``q(t)`` on ``grid`` via bucket-grid range queries."""
    grid = default_grid(m) if grid is None else _as_grid(grid)
    cands = centers.centers(m)
    table = indexed_ball_masses(m.points, m.weights, cands, grid.radii, m.total)
    return _curve_from_table(m, grid, cands, table)


def concentration_curve_bruteforce(m, grid=None):
    """Exhaustive maximum over atom-centred balls; reference for the indexed path."""
    if len(m) > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"{len(m)} atoms exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}; "
            "use concentration_curve instead"
        )
    grid = default_grid(m) if grid is None else _as_grid(grid)
    table = brute_ball_masses(m.points, m.weights, m.points, grid.radii, m.total)
    return _curve_from_table(m, grid, m.points, table)


@dataclass(frozen=True)
class TailWindow:
    """The last ``size`` entries of a sequence; default ``max(3, ceil(len/4))``."""

    size: int = None

    def resolve(self, length):
        if self.size is None:
            return min(length, max(3, math.ceil(0.25 * length)))
        if self.size < 1:
            raise ValueError("tail window size must be positive")
        if self.size > length:
            raise ValueError(f"tail window of {self.size} exceeds sequence length {length}")
        return self.size


@dataclass(frozen=True, eq=False)
class LimitProfile:
    radii: RadiusGrid
    limsup_values: np.ndarray
    alpha: float
    oscillation: np.ndarray

    def to_dict(self):
        return {
            "radii": [float(r) for r in self.radii.radii],
            "limsup": [float(v) for v in self.limsup_values],
            "alpha": float(self.alpha),
            "oscillation": [float(v) for v in self.oscillation],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def curve_table(seq, grid, centers=ATOMS):
    """Matrix ``Q[n, k] = q_n(radii[k])`` for every measure of the sequence."""
    return np.array([concentration_curve(m, grid, centers).values for m in seq])


def limsup_profile(seq, grid=None, tail=TailWindow(), centers=ATOMS, values=None):
    """Tail max per radius with tail oscillation as the diagnostic."""
    grid = sequence_grid(seq) if grid is None else _as_grid(grid)
    size = tail.resolve(len(seq))
    if values is None:
        values = curve_table(seq, grid, centers)
    block = np.asarray(values)[-size:]
    sup = block.max(axis=0)
    osc = sup - block.min(axis=0)
    return LimitProfile(grid, sup, float(sup[-1]), osc)


# ------------------------------------------------------- diagonal scales

def diagonal_scales(values, targets, tolerances=None):
    """Finite version of the diagonal choice of scales for monotone families.

    ``values[n, k]`` is ``f_n(s_k)`` (nondecreasing in ``k``) and ``targets[k]``
    is the row limit ``f(s_k)``.  With accuracy ``tolerances[k]`` (default
    ``1/(k+1)``, i.e. ``1/k`` counting from one), ``N_k`` is the first ``n``
    from which ``|f_m(s_k) - f(s_k)| < tol_k`` for every later ``m``; the
    thresholds ``n_k`` are the running maxima of ``N_k`` and the scale
    returned for row ``n`` is the largest ``k`` with ``n_k <= n`` (``-1`` if
    none).  The result is nondecreasing in ``n``.
    """
    v = np.asarray(values, dtype=float)
    t = np.asarray(targets, dtype=float)
    if v.ndim != 2 or v.shape[1] != len(t):
        raise ValueError("values must be a matrix with one column per target")
    if np.any(np.diff(v, axis=1) < 0):
        bad = int(np.flatnonzero(np.any(np.diff(v, axis=1) < 0, axis=1))[0])
        raise ValueError(f"row {bad} is not nondecreasing")
    nrow, ncol = v.shape
    tol = 1.0 / np.arange(1, ncol + 1) if tolerances is None else np.broadcast_to(
        np.asarray(tolerances, dtype=float), (ncol,))
    ok = np.abs(v - t) < tol
    # N_k: first row after the last failure in column k
    first = np.empty(ncol, dtype=int)
    for k in range(ncol):
        bad = np.flatnonzero(~ok[:, k])
        first[k] = 0 if len(bad) == 0 else bad[-1] + 1
    thresholds = np.maximum.accumulate(first)
    scales = np.searchsorted(thresholds, np.arange(nrow), side="right") - 1
    return scales


# ------------------------------------------------------ Helly subsequence

class NoConvergentSubsequence(ValueError):
    def __init__(self, best_oscillation, best_length):
        super().__init__(
            f"no subsequence of the required length converges; best oscillation "
            f"{best_oscillation:.3g} over {best_length} curves")
        self.best_oscillation = best_oscillation
        self.best_length = best_length


def helly_subsequence(curves, beta, tol=1e-9, min_length=3, alpha=None):
    """Longest index set whose curves agree within ``tol`` at every radius.

    Each curve with final value above ``beta`` anchors a greedy pass that
    admits later curves while the running max minus min stays within ``tol``
    at every radius.  The longest admitted set wins (ties: larger limit final
    value, then earlier anchor).  Returns ``(indices, limit_curve)`` with the
    limit taken as the pointwise mean over the chosen curves.
    """
    if not curves:
        raise ValueError("no curves given")
    grid = curves[0].radii.radii
    if any(not np.array_equal(c.radii.radii, grid) for c in curves):
        raise ValueError("curves must share a radius grid")
    Q = np.array([c.values for c in curves])
    if alpha is None:
        alpha = float(Q[-TailWindow().resolve(len(Q)):, -1].max())
    if beta >= alpha:
        raise ValueError(f"beta={beta} must lie below alpha={alpha}")
    best = None
    best_osc = (math.inf, 0)
    for a in range(len(Q)):
        if Q[a, -1] <= beta:
            continue
        lo = Q[a].copy()
        hi = Q[a].copy()
        chosen = [a]
        for b in range(a + 1, len(Q)):
            nlo = np.minimum(lo, Q[b])
            nhi = np.maximum(hi, Q[b])
            if np.all(nhi - nlo <= tol):
                lo, hi = nlo, nhi
                chosen.append(b)
        limit = Q[chosen].mean(axis=0)
        if limit[-1] <= beta:
            continue
        key = (len(chosen), limit[-1], -a)
        if best is None or key > best[0]:
            best = (key, chosen, limit)
        if len(chosen) < min_length:
            # record how close the pair-wise best came, for the error message
            for b in range(a + 1, len(Q)):
                osc = float(np.max(np.abs(Q[b] - Q[a])))
                if osc < best_osc[0]:
                    best_osc = (osc, 2)
    if best is None or len(best[1]) < min_length:
        raise NoConvergentSubsequence(best_osc[0], 0 if best is None else len(best[1]))
    return best[1], best[2]
