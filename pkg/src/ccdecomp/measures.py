"""Finite positive measures on R^N stored as weighted point clouds."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._balls import ball_sum, sq_dist


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball ``{y : |y - center| <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("ball center must be a finite vector")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return len(self.center)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms ``sum_i w_i delta_{x_i}``.

    Zero-weight atoms are dropped on construction; coincident atoms are kept
    as separate entries.  ``points`` has shape ``(n, dim)``.
    """

    points: np.ndarray
    weights: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        dim = int(self.dim) if self.dim else (pts.shape[1] if pts.ndim == 2 else 0)
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        if pts.size == 0:
            pts = np.zeros((0, dim))
        if pts.ndim == 1 and dim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise DimensionError(f"points must have shape (n, {dim}), got {pts.shape}")
        if len(pts) != len(w):
            raise ValueError("points and weights differ in length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        keep = w > 0
        if not keep.all():
            pts, w = pts[keep], w[keep]
        pts = np.ascontiguousarray(pts)
        w = np.ascontiguousarray(w)
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_total", math.fsum(w))

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    def __len__(self):
        return len(self.weights)

    @property
    def total(self):
        return self._total

    def subset(self, mask):
        return DiscreteMeasure(self.points[mask], self.weights[mask], dim=self.dim)

    def translated(self, shift):
        return DiscreteMeasure(self.points + np.asarray(shift, float), self.weights, dim=self.dim)

    def scaled(self, c):
        return DiscreteMeasure(self.points, self.weights * c, dim=self.dim)

    def same_as(self, other):
        return (
            self.dim == other.dim
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True, eq=False)
class MeasureSequence:
    """Nonempty ordered list of measures of one dimension, optionally labelled."""

    items: tuple
    labels: tuple = None

    def __post_init__(self):
        items = tuple(self.items)
        if not items:
            raise ValueError("a measure sequence must be nonempty")
        dim = items[0].dim
        if any(m.dim != dim for m in items):
            raise DimensionError("all measures in a sequence must share one dimension")
        labels = tuple(range(1, len(items) + 1)) if self.labels is None else tuple(int(i) for i in self.labels)
        if len(labels) != len(items):
            raise ValueError("labels and items differ in length")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.items[0].dim

    @property
    def mass_bound(self):
        return max(m.total for m in self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, k):
        return self.items[k]

    def __iter__(self):
        return iter(self.items)

    def select(self, positions):
        positions = list(positions)
        return MeasureSequence(tuple(self.items[k] for k in positions),
                               tuple(self.labels[k] for k in positions))


def _check_dim(m, b):
    if b.dim != m.dim:
        raise DimensionError(f"ball of dimension {b.dim} used with measure of dimension {m.dim}")


def _inside(m, b):
    return sq_dist(m.points, b.center) <= b.radius * b.radius


def total_mass(m):
    return m.total


def ball_mass(m, b):
    """Mass of the closed ball ``b``, summed in (distance, atom index) order."""
    _check_dim(m, b)
    return ball_sum(m.points, m.weights, b.center, b.radius, m.total)


def restrict_ball(m, b):
    _check_dim(m, b)
    return m.subset(_inside(m, b))


def restrict_outside_balls(m, balls):
    keep = np.ones(len(m), dtype=bool)
    for b in balls:
        _check_dim(m, b)
        keep &= ~_inside(m, b)
    return m.subset(keep)


def measure_from_grid_density(g):
    """One atom per node of a nonnegative grid density, weight ``value * h**N``."""
    vals = np.asarray(g.values, dtype=float)
    if np.any(vals < 0):
        raise ValueError("density values must be nonnegative")
    flat = vals.reshape(-1)
    keep = flat > 0
    pts = g.node_coords()[keep]
    return DiscreteMeasure(pts, flat[keep] * g.cell_volume, dim=g.dim)


# ---------------------------------------------------------------- CSV I/O

def _fmt(x):
    return repr(float(x))


def write_measure_csv(m, path):
    with open(path, "w") as fh:
        fh.write(f"# dim={m.dim}\n")
        for x, w in zip(m.points, m.weights):
            fh.write(",".join(_fmt(v) for v in x) + "," + _fmt(w) + "\n")


def write_sequence_csv(seq, path):
    """Single-file form: leading column ``n`` with the sequence label."""
    with open(path, "w") as fh:
        fh.write(f"# dim={seq.dim}\n")
        for n, m in zip(seq.labels, seq.items):
            for x, w in zip(m.points, m.weights):
                fh.write(f"{n}," + ",".join(_fmt(v) for v in x) + "," + _fmt(w) + "\n")


class FormatError(ValueError):
    """Parse failure carrying the file name and line number."""

    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


def _read_rows(path):
    dim = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip().replace(" ", "")
                if body.startswith("dim="):
                    try:
                        dim = int(body[4:])
                    except ValueError:
                        raise FormatError(path, lineno, "bad dim header") from None
                    if dim < 1:
                        raise FormatError(path, lineno, "dim must be positive")
                continue
            if dim is None:
                raise FormatError(path, lineno, "missing '# dim=N' header")
            try:
                vals = [float(t) for t in line.split(",")]
            except ValueError:
                raise FormatError(path, lineno, "non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(path, lineno, "non-finite value")
            if vals[-1] < 0:
                raise FormatError(path, lineno, "negative weight")
            rows.append((lineno, vals))
    if dim is None:
        raise FormatError(path, 1, "missing '# dim=N' header")
    return dim, rows


def read_measure_csv(path):
    dim, rows = _read_rows(path)
    for lineno, vals in rows:
        if len(vals) != dim + 1:
            raise FormatError(path, lineno, f"expected {dim + 1} fields, got {len(vals)}")
    arr = np.array([v for _, v in rows], dtype=float).reshape(-1, dim + 1)
    return DiscreteMeasure(arr[:, :dim], arr[:, dim], dim=dim)


def read_sequence(path):
    """Read a sequence from a directory of CSV files or a single ``n``-column file."""
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if f.endswith(".csv"))
        if not names:
            raise FormatError(path, 0, "directory holds no .csv files")
        items = [read_measure_csv(os.path.join(path, f)) for f in names]
        return MeasureSequence(tuple(items))
    dim, rows = _read_rows(path)
    groups = {}
    for lineno, vals in rows:
        if len(vals) != dim + 2:
            raise FormatError(path, lineno, f"expected {dim + 2} fields, got {len(vals)}")
        if vals[0] != int(vals[0]):
            raise FormatError(path, lineno, "sequence label must be an integer")
        groups.setdefault(int(vals[0]), []).append(vals[1:])
    if not groups:
        raise FormatError(path, 0, "no data rows")
    labels = sorted(groups)
    items = []
    for n in labels:
        arr = np.array(groups[n], dtype=float)
        items.append(DiscreteMeasure(arr[:, :dim], arr[:, dim], dim=dim))
    return MeasureSequence(tuple(items), tuple(labels))
