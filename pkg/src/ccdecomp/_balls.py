"""Ball-mass kernels shared by the brute-force and bucket-grid paths.

Every ball mass in the package is the left-to-right sum of the weights of
the atoms inside the closed ball, taken in ``(squared distance, atom index)``
order.  Fixing the fold order is what lets the indexed and exhaustive paths
agree bit for bit, and it makes ball masses monotone in the radius.
"""

from __future__ import annotations

import math

import numpy as np

# Upper bound on candidate pairs materialised at once.
PAIR_CHUNK = 2_000_000


def sq_dist(points, center):
    """Squared Euclidean distances from ``center`` to each row of ``points``.

    The accumulation is spelled out per axis so every caller produces the
    same floating point values for the same (point, center) pair.
    """
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    d2 = None
    for k in range(points.shape[-1]):
        diff = points[..., k] - center[..., k]
        d2 = diff * diff if d2 is None else d2 + diff * diff
    if d2 is None:
        return np.zeros(np.broadcast_shapes(points.shape[:-1], center.shape[:-1]))
    return d2


def ordered_sum(weights, d2):
    """Fold ``weights`` in (d2, index) order; empty input gives 0."""
    if len(weights) == 0:
        return 0.0
    order = np.lexsort((np.arange(len(d2)), d2))
    return float(np.cumsum(weights[order])[-1])


def ball_sum(points, weights, center, radius, total=None):
    """Canonical mass of the closed ball, capped at the total mass."""
    if total is None:
        total = math.fsum(weights)
    d2 = sq_dist(points, np.asarray(center, dtype=float))
    inside = d2 <= radius * radius
    return min(ordered_sum(weights[inside], d2[inside]), total)


def _segment_totals(n_centers, ci, w):
    """Per-center sequential sums of ``w``, pairs already grouped by center.

    ``ci`` must be sorted and, within a center, ``w`` must be in fold order.
    """
    out = np.zeros(n_centers)
    if len(ci) == 0:
        return out
    counts = np.bincount(ci, minlength=n_centers)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(len(ci)) - starts[ci]
    rows = np.flatnonzero(counts)
    row_of = np.full(n_centers, -1)
    row_of[rows] = np.arange(len(rows))
    table = np.zeros((len(rows), counts.max()))
    table[row_of[ci], pos] = w
    out[rows] = np.cumsum(table, axis=1)[:, -1]
    return out


def brute_ball_masses(points, weights, centers, radii, total=None):
    """Ball masses for every (center, radius), scanning every atom.

    Returns an array of shape ``(len(radii), len(centers))``.
    """
    n = len(points)
    radii = np.asarray(radii, dtype=float)
    out = np.zeros((len(radii), len(centers)))
    if n == 0 or len(centers) == 0:
        return out
    if total is None:
        total = math.fsum(weights)
    r2 = radii * radii
    chunk = max(1, PAIR_CHUNK // n)
    for s in range(0, len(centers), chunk):
        c = centers[s:s + chunk]
        d2 = sq_dist(points[None, :, :], c[:, None, :])
        # stable sort keeps the lower atom index first on distance ties
        order = np.argsort(d2, axis=1, kind="stable")
        d2s = np.take_along_axis(d2, order, axis=1)
        prefix = np.cumsum(weights[order], axis=1)
        rows = np.arange(len(c))
        for k, rr in enumerate(r2):
            cnt = (d2s <= rr).sum(axis=1)
            vals = prefix[rows, np.maximum(cnt - 1, 0)]
            out[k, s:s + chunk] = np.minimum(np.where(cnt > 0, vals, 0.0), total)
    return out


class BucketGrid:
    """Uniform bucket grid over a point set, cell side equal to the query radius.

    A closed ball of radius ``r`` centred anywhere in cell ``c`` only meets
    atoms stored in the ``3**N`` cells around ``c``.
    """

    def __init__(self, points, cell):
        self.points = points
        self.cell = float(cell)
        self.lo = points.min(axis=0) if len(points) else np.zeros(points.shape[1])
        keys = self._cells(points)
        self.dim = points.shape[1]
        self.span = keys.max(axis=0) + 3 if len(points) else np.ones(self.dim, int)
        self.codes = self._encode(keys)
        self.order = np.argsort(self.codes, kind="stable")
        self.sorted_codes = self.codes[self.order]

    def _cells(self, x):
        return np.floor((x - self.lo) / self.cell).astype(np.int64)

    def _encode(self, keys):
        # shift by one so neighbour offsets of -1 stay non-negative
        code = np.zeros(len(keys), dtype=np.int64)
        for k in range(keys.shape[1]):
            code = code * self.span[k] + (keys[:, k] + 1)
        return code

    def candidate_count(self, centers):
        """Number of (center, atom) pairs :meth:`candidate_pairs` would return."""
        return sum(int((hi - lo).sum()) for _, lo, hi in self._ranges(centers))

    def _ranges(self, centers):
        ckeys = self._cells(centers)
        inside = np.all((ckeys >= -1) & (ckeys <= self.span - 2), axis=1)
        for off in np.ndindex(*(3,) * self.dim):
            shifted = ckeys + (np.asarray(off) - 1)
            ok = inside & np.all((shifted >= -1) & (shifted <= self.span - 2), axis=1)
            if not ok.any():
                continue
            idx = np.flatnonzero(ok)
            codes = self._encode(shifted[idx])
            lo = np.searchsorted(self.sorted_codes, codes, side="left")
            hi = np.searchsorted(self.sorted_codes, codes, side="right")
            yield idx, lo, hi

    def candidate_pairs(self, centers):
        """(center index, atom index) pairs from the neighbour cells."""
        ci_all, aj_all = [], []
        for idx, lo, hi in self._ranges(centers):
            cnt = hi - lo
            if cnt.sum() == 0:
                continue
            ci_all.append(np.repeat(idx, cnt))
            starts = np.repeat(lo - np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
            aj_all.append(self.order[np.arange(cnt.sum()) + starts])
        if not ci_all:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.concatenate(ci_all), np.concatenate(aj_all)


def indexed_ball_masses(points, weights, centers, radii, total=None):
    """Same contract as :func:`brute_ball_masses`, using bucket grids.

    Radii are processed from largest to smallest.  The pairs inside the
    ball at one radius, kept sorted by (center, d2, atom), contain the pairs
    for any smaller radius in the same relative order, so a smaller radius
    either filters the current list or, when its own bucket grid yields far
    fewer candidates, rebuilds the list from that grid.
    """
    radii = np.asarray(radii, dtype=float)
    out = np.zeros((len(radii), len(centers)))
    if len(points) == 0 or len(centers) == 0:
        return out
    if total is None:
        total = math.fsum(weights)
    held = None  # (ci, aj, d2) sorted by (ci, d2, aj)
    for k in np.argsort(-radii, kind="stable"):
        r = radii[k]
        grid = None
        rebuild = held is None
        # counting candidates costs about 3**N searches per center; only worth it
        # when the held list is much longer than that
        if not rebuild and len(held[0]) > 2 * 3 ** points.shape[1] * len(centers):
            grid = BucketGrid(points, r)
            rebuild = grid.candidate_count(centers) * 2 < len(held[0])
        if rebuild:
            grid = grid or BucketGrid(points, r)
            ci, aj = grid.candidate_pairs(centers)
            d2 = sq_dist(points[aj], centers[ci])
            keep = d2 <= r * r
            ci, aj, d2 = ci[keep], aj[keep], d2[keep]
            order = np.lexsort((aj, d2, ci))
            held = (ci[order], aj[order], d2[order])
        else:
            keep = held[2] <= r * r
            held = tuple(a[keep] for a in held)
        sums = _segment_totals(len(centers), held[0], weights[held[1]])
        out[k] = np.minimum(sums, total)
    return out
