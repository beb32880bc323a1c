"""Grid-sampled W^{1,p} functions: norms, densities, cut-offs and profile decompositions.

Functions live on a uniform grid and are taken to be zero off the grid.
Every integral is a Riemann sum with cell volume ``h**N``.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .extraction import ExtractionConfig, extract_profiles
from .measures import MeasureSequence, measure_from_grid_density

GFN_MAGIC = b"GFN1"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a function on ``origin + h * index``."""

    values: np.ndarray
    spacing: float
    origin: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1:
            raise ValueError("values must be at least one-dimensional")
        if any(s < 3 for s in v.shape):
            raise ValueError(f"every axis needs at least 3 nodes, got shape {v.shape}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        o = np.zeros(v.ndim) if self.origin is None else np.asarray(self.origin, dtype=float).reshape(-1)
        if len(o) != v.ndim:
            raise ValueError("origin length must match the grid dimension")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "origin", o)

    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    def axes(self):
        return [self.origin[k] + self.spacing * np.arange(n) for k, n in enumerate(self.shape)]

    def node_coords(self):
        """``(n_nodes, N)`` coordinates in row-major node order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def with_values(self, values):
        return GridFunction(values, self.spacing, self.origin)

    def same_geometry(self, other):
        return (self.shape == other.shape and self.spacing == other.spacing
                and np.array_equal(self.origin, other.origin))

    def nearest_node(self, x):
        idx = np.rint((np.asarray(x, float) - self.origin) / self.spacing).astype(int)
        return idx

    def integral(self, f):
        return float(np.sum(f)) * self.cell_volume

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


# ------------------------------------------------------------- GFN files

def write_gfn(g, path):
    with open(path, "wb") as fh:
        fh.write(GFN_MAGIC)
        fh.write(struct.pack("<I", g.dim))
        fh.write(struct.pack(f"<{g.dim}Q", *g.shape))
        fh.write(struct.pack("<d", g.spacing))
        fh.write(struct.pack(f"<{g.dim}d", *g.origin))
        fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())


def read_gfn(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GFN_MAGIC:
        raise ValueError(f"{path}: not a GFN1 file")
    (dim,) = struct.unpack_from("<I", data, 4)
    off = 8
    shape = struct.unpack_from(f"<{dim}Q", data, off)
    off += 8 * dim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    origin = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    count = int(np.prod(shape))
    if len(data) - off != 8 * count:
        raise ValueError(f"{path}: expected {count} values, found {(len(data) - off) // 8}")
    vals = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
    return GridFunction(vals.astype(float), h, np.array(origin))


# ------------------------------------------------------------ parameters

def critical_exponent(p, dim):
    """``N p / (N - p)`` below the dimension, infinity otherwise."""
    return dim * p / (dim - p) if p < dim else math.inf


@dataclass(frozen=True)
class SobolevParams:
    """Exponents for a ``W^{1,p}(R^N)`` problem.

    For ``p >= N`` the density carries the series
    ``sum_l |u|^{p_l} / (2^l C_l^{p_l} A^{p_l})`` truncated after
    ``series_depth`` terms; ``series_exponents`` default to ``p + l``.
    """

    p: float
    dim: int
    q_list: tuple = ()
    series_depth: int = 3
    series_exponents: tuple = None
    series_constants: tuple = None

    def __post_init__(self):
        if not self.p > 1 or not math.isfinite(self.p):
            raise ValueError("p must lie in (1, inf)")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        for q in self.q_list:
            check_exponent(self.p, q, self.dim)
        if self.series_exponents is not None:
            if len(self.series_exponents) != self.series_depth:
                raise ValueError("one series exponent per series term is required")
            for q in self.series_exponents:
                check_exponent(self.p, q, self.dim)
        if self.series_constants is not None and len(self.series_constants) != self.series_depth:
            raise ValueError("one series constant per series term is required")

    @property
    def p_star(self):
        return critical_exponent(self.p, self.dim)

    def exponents(self):
        if self.series_exponents is not None:
            return tuple(self.series_exponents)
        return tuple(self.p + l for l in range(1, self.series_depth + 1))


def check_exponent(p, q, dim):
    ps = critical_exponent(p, dim)
    if not (p < q < ps):
        raise ValueError(f"q must lie in (p, p*): got p={p}, q={q}, p*={ps}")


# ----------------------------------------------------------------- norms

def gradient(u):
    """``(N, *shape)`` array of partial derivatives.

    Central differences inside, first-order one-sided differences on the
    boundary nodes.
    """
    parts = np.gradient(u.values, u.spacing, edge_order=1)
    if u.dim == 1:
        parts = [parts]
    return np.stack(parts)


def grad_magnitude(u):
    g = gradient(u)
    return np.sqrt(np.sum(g * g, axis=0))


def lp_power(u, p):
    """``int |u|^p``."""
    return u.integral(np.abs(u.values) ** p)


def lp_norm(u, p):
    return lp_power(u, p) ** (1.0 / p)


def grad_power(u, p):
    """``int |grad u|^p``."""
    return u.integral(grad_magnitude(u) ** p)


def w1p_norm(u, p):
    return (grad_power(u, p) + lp_power(u, p)) ** (1.0 / p)


def estimate_series_constants(corpus, p, exponents):
    """Twice the largest ``||u||_{p_l} / ||u||_{W^{1,p}}`` over the corpus, per exponent."""
    out = []
    for s in exponents:
        best = 0.0
        for u in corpus:
            w = w1p_norm(u, p)
            if w > 0:
                best = max(best, lp_norm(u, s) / w)
        out.append(2.0 * best if best > 0 else 1.0)
    return tuple(out)


def density_rho(u, params, A=None):
    """Pointwise density whose integral controls the ``W^{1,p}`` and ``L^q`` masses.

    Below the dimension: ``|grad u|^p + |u|^p + |u|^{p*}``.  Otherwise the
    last term becomes the weighted series over ``params.exponents()``, which
    needs ``params.series_constants`` and the bound ``A``.
    """
    p = params.p
    if u.dim != params.dim:
        raise ValueError("grid dimension does not match the parameters")
    a = np.abs(u.values)
    rho = grad_magnitude(u) ** p + a ** p
    if p < params.dim:
        rho = rho + a ** params.p_star
    else:
        if params.series_constants is None or A is None:
            raise ValueError("p >= N needs series constants and the bound A")
        if not A > 0:
            raise ValueError("A must be positive")
        for l, (s, c) in enumerate(zip(params.exponents(), params.series_constants), start=1):
            rho = rho + a ** s / (2.0 ** l * (c * A) ** s)
    return u.with_values(rho)


def _ball_offsets(radius, spacing, dim):
    w = int(math.floor(radius / spacing + 1e-9))
    grids = np.meshgrid(*([np.arange(-w, w + 1)] * dim), indexing="ij")
    d2 = sum(g.astype(float) ** 2 for g in grids) * spacing ** 2
    return d2 <= radius * radius * (1 + 1e-12)


def local_uniform_mass(u, p, radius=1.0):
    """``max_y int_{B(y, radius)} |grad u|^p + |u|^p`` over grid nodes ``y``."""
    f = grad_magnitude(u) ** p + np.abs(u.values) ** p
    if not np.any(f):
        return 0.0
    foot = _ball_offsets(radius, u.spacing, u.dim)
    local = ndimage.correlate(f, foot.astype(float), mode="constant", cval=0.0)
    return float(local.max()) * u.cell_volume


@dataclass(frozen=True, eq=False)
class Lemma41Row:
    lq: float
    local_mass: float
    w1p: float
    ratio: float


def lemma41_ratio(u, p, q):
    lq = lp_norm(u, q)
    w = w1p_norm(u, p)
    s = local_uniform_mass(u, p)
    if w == 0 or s == 0:
        return Lemma41Row(lq, s, w, math.nan)
    return Lemma41Row(lq, s, w, lq / (s ** (1.0 / p - 1.0 / q) * w ** (p / q)))


def lemma41_check(corpus, p, q):
    """Empirical constant of ``||u||_q <= C S^{1/p-1/q} ||u||_{W^{1,p}}^{p/q}``.

    ``S`` is :func:`local_uniform_mass`.  Zero functions are skipped.
    Returns ``(max_ratio, rows)``.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    dims = {u.dim for u in corpus}
    if len(dims) != 1:
        raise ValueError("corpus mixes dimensions")
    check_exponent(p, q, dims.pop())
    rows = [lemma41_ratio(u, p, q) for u in corpus]
    good = [r.ratio for r in rows if not math.isnan(r.ratio)]
    if not good:
        raise ValueError("every corpus function is zero")
    return max(good), rows


# --------------------------------------------------------------- cut-offs

def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi(r):
    """Radial cut-off profile: 1 on ``|x| <= 1/2``, 0 on ``|x| >= 1``, smooth between."""
    return _smooth_step(2.0 * (1.0 - np.asarray(r, dtype=float)))


def balls_disjoint(centers, radii):
    bad = []
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if not np.linalg.norm(np.asarray(centers[i]) - np.asarray(centers[j])) > radii[i] + radii[j]:
                bad.append((i + 1, j + 1))
    return bad


def cutoff_partition(centers, radii, geometry):
    """Weights ``chi((x - c_i)/r_i)`` and background ``prod_i (1 - chi_i)`` on the grid."""
    bad = balls_disjoint(centers, radii)
    if bad:
        raise ValueError(f"cut-off balls overlap: pairs {bad}")
    x = geometry.node_coords()
    weights = []
    background = np.ones(len(x))
    for c, r in zip(centers, radii):
        d = np.sqrt(np.sum((x - np.asarray(c, float)) ** 2, axis=1)) / r
        w = chi(d)
        weights.append(geometry.with_values(w.reshape(geometry.shape)))
        background = background * (1.0 - w)
    return weights, geometry.with_values(background.reshape(geometry.shape))


# ----------------------------------------------------- profile placement

def extract_patch(u, center_idx, half):
    """Values of ``u`` on the cube of ``half`` nodes around ``center_idx``."""
    lo = np.asarray(center_idx) - half
    hi = np.asarray(center_idx) + half + 1
    if np.any(lo < 0) or np.any(hi > np.array(u.shape)):
        raise ValueError("requested ball leaves the grid; pad the data further")
    return u.values[tuple(slice(a, b) for a, b in zip(lo, hi))].copy()


def place_patch(geometry, patch, center_idx):
    """Grid function equal to ``patch`` around ``center_idx`` and zero elsewhere."""
    half = (np.array(patch.shape) - 1) // 2
    lo = np.asarray(center_idx) - half
    hi = lo + np.array(patch.shape)
    if np.any(lo < 0) or np.any(hi > np.array(geometry.shape)):
        raise ValueError("profile leaves the grid; pad the data further")
    out = np.zeros(geometry.shape)
    out[tuple(slice(a, b) for a, b in zip(lo, hi))] = patch
    return geometry.with_values(out)


@dataclass(frozen=True, eq=False)
class ProfileDecomposition:
    """Profiles ``V^i`` with their center/radius tracks over the surviving indices.

    ``labels`` are the surviving sequence labels; ``centers[i][k]`` is the
    node index of ``y^i`` at ``labels[k]``, and ``ball_centers[i][k]``,
    ``radii[i][k]`` describe the bubble ball there.
    """

    us: tuple
    labels: tuple
    positions: tuple
    params: SobolevParams
    profiles: list
    centers: list
    radii: list
    ball_centers: list
    truncation_radii: list
    oscillation: list
    report: object
    A: float
    series_constants: tuple

    @property
    def k(self):
        return len(self.profiles)

    def u_at(self, label):
        return self.us[self.positions[self.labels.index(label)]]

    def placed(self, i, label):
        """``V^i(. - y^i_n)`` on the data grid (``i`` is 1-based)."""
        k = self.labels.index(label)
        return place_patch(self.us[0], self.profiles[i - 1].values, self.centers[i - 1][k])

    def remainder(self, label, k):
        """``w_n^k = u_n - sum_{i<=k} V^i(. - y_n^i)``."""
        w = self.u_at(label)
        for i in range(1, k + 1):
            w = w - self.placed(i, label)
        return w

    def center_coords(self, i, label):
        g = self.us[0]
        return g.origin + g.spacing * np.asarray(self.centers[i - 1][self.labels.index(label)])

    def separations(self, i, j):
        return np.array([np.linalg.norm(self.center_coords(i, n) - self.center_coords(j, n))
                         for n in self.labels])


def _barycenter_node(rho, center, radius):
    """Node nearest to the ``rho``-barycenter of ``B(center, radius)``.

    Shifting the data by whole nodes shifts the result by the same nodes,
    so profiles from different indices line up.
    """
    x = rho.node_coords()
    f = rho.values.reshape(-1)
    inside = (np.sum((x - center) ** 2, axis=1) <= radius * radius) & (f > 0)
    if not inside.any():
        return rho.nearest_node(center)
    rel = x[inside] - center
    bary = center + np.sum(rel * f[inside, None], axis=0) / np.sum(f[inside])
    return rho.nearest_node(bary)


def profile_extract(us, params, cfg=ExtractionConfig(), A=None, tail=None):
    """Translation profiles of a bounded ``W^{1,p}`` sequence sampled on one grid.

    The densities ``rho_n`` become point measures and go through
    :func:`extract_profiles`.  Each bubble's centers are snapped to nodes;
    ``y_n^i`` is the node nearest to the ``rho_n``-barycenter of the bubble's
    inner ball and ``V^i`` is the tail mean of ``u_n(. + y_n^i)`` cut to the
    ball of the bubble's first radius, shrunk if needed to stay on the grid
    as long as the cut ball still holds the bubble's density mass.  The cut-off balls keep the centers
    found by the extraction.  For ``p >= N`` missing series constants come
    from :func:`estimate_series_constants` on ``us`` and ``A`` defaults to
    the largest ``W^{1,p}`` norm.
    """
    us = tuple(us)
    if not us:
        raise ValueError("no functions given")
    g0 = us[0]
    if any(not u.same_geometry(g0) for u in us):
        raise ValueError("all functions must share one grid geometry")
    if g0.dim != params.dim:
        raise ValueError("grid dimension does not match the parameters")
    consts = params.series_constants
    if params.p >= params.dim:
        if A is None:
            A = max(w1p_norm(u, params.p) for u in us)
        if consts is None:
            consts = estimate_series_constants(us, params.p, params.exponents())
        params = SobolevParams(params.p, params.dim, params.q_list, params.series_depth,
                               params.series_exponents, consts)
    rhos = [density_rho(u, params, A) for u in us]
    seq = MeasureSequence(tuple(measure_from_grid_density(r) for r in rhos))
    report = extract_profiles(seq, cfg)
    labels = tuple(report.indices)
    positions = tuple(seq.labels.index(n) for n in labels)
    m_tol = report.config_echo["mass_tol"]
    t_size = cfg.tail.resolve(len(labels)) if tail is None else min(tail, len(labels))
    profiles, centers, radii, balls, trunc, osc = [], [], [], [], [], []
    for b in report.bubbles:
        idx = [_barycenter_node(rho, c, float(ri))
               for rho, c, ri in zip((rhos[p] for p in positions), b.centers, b.phi_radii)]
        # cut radius: the first ball radius, shrunk to fit the grid at every index
        room = min(int(min(min(c), min(np.array(g0.shape) - 1 - c))) for c in idx)
        r0 = min(float(b.radii[0]), room * g0.spacing)
        half = int(math.floor(r0 / g0.spacing + 1e-9))
        mask = _ball_offsets(r0, g0.spacing, g0.dim)
        kept = [float(np.sum(extract_patch(rhos[p], c, half) * mask)) * g0.cell_volume
                for p, c in zip(positions[-t_size:], idx[-t_size:])]
        if min(kept) < b.mass - m_tol:
            raise ValueError("requested ball leaves the grid; pad the data further")
        patches = [extract_patch(us[p], c, half) * mask for p, c in zip(positions, idx)]
        tail_patches = np.array(patches[-t_size:])
        V = tail_patches.mean(axis=0)
        spread = max(lp_norm(GridFunction(V - P, g0.spacing), 2) for P in tail_patches)
        profiles.append(GridFunction(V, g0.spacing, -half * g0.spacing * np.ones(g0.dim)))
        centers.append([tuple(int(v) for v in c) for c in idx])
        radii.append([float(r) for r in b.radii])
        balls.append(np.array(b.centers))
        trunc.append(r0)
        osc.append(float(spread))
    return ProfileDecomposition(us, labels, positions, params, profiles, centers, radii, balls,
                                trunc, osc, report, A, consts)


def remainder_split(dec, label, k):
    """``(v1, v2)`` with ``u_n = sum_i V^i(. - y_n^i) + v1 + v2``.

    ``v1 = sum_i (chi_i u_n - V^i(. - y_n^i))`` and ``v2 = prod_i (1 - chi_i) u_n``
    with cut-offs on the bubble balls at ``label``.
    """
    u = dec.u_at(label)
    if k == 0:
        return u.with_values(np.zeros(u.shape)), u
    pos = dec.labels.index(label)
    cs = [dec.ball_centers[i - 1][pos] for i in range(1, k + 1)]
    rs = [dec.radii[i - 1][pos] for i in range(1, k + 1)]
    weights, background = cutoff_partition(cs, rs, u)
    v1 = np.zeros(u.shape)
    for i, w in enumerate(weights, start=1):
        v1 = v1 + (w.values * u.values - dec.placed(i, label).values)
    return u.with_values(v1), u.with_values(background.values * u.values)


@dataclass(frozen=True)
class ResidualRecord:
    label: int
    k: int
    u_lp: float
    u_grad: float
    residual_iii: float
    residual_iv: float
    annulus_leakage: float

    def to_dict(self):
        return dict(self.__dict__)


def norm_expansion_check(dec, label, k, p=None):
    """Residuals of the ``L^p`` and gradient expansions at ``(label, k)``.

    ``residual_iii = | |u|_p^p - sum |V^i|_p^p - |w|_p^p |`` and
    ``residual_iv`` the same with gradients; both use exponent ``p``
    (default ``dec.params.p``).  ``annulus_leakage`` sums
    ``int |grad u|^p + |u|^p`` over ``B(y^i, r^i) \\ B(y^i, r^i/2)``.
    """
    p = dec.params.p if p is None else p
    u = dec.u_at(label)
    w = dec.remainder(label, k)
    up, ug = lp_power(u, p), grad_power(u, p)
    sv = math.fsum(lp_power(V, p) for V in dec.profiles[:k])
    sg = math.fsum(grad_power(V, p) for V in dec.profiles[:k])
    r3 = abs(up - sv - lp_power(w, p))
    r4 = abs(ug - sg - grad_power(w, p))
    f = grad_magnitude(u) ** p + np.abs(u.values) ** p
    x = u.node_coords()
    pos = dec.labels.index(label)
    leak = 0.0
    for i in range(1, k + 1):
        d = np.sqrt(np.sum((x - dec.ball_centers[i - 1][pos]) ** 2, axis=1)).reshape(u.shape)
        r = dec.radii[i - 1][pos]
        leak += u.integral(f * ((d <= r) & (d > r / 2)))
    return ResidualRecord(int(label), int(k), up, ug, r3, r4, leak)


def decomposition_to_json(dec, directory):
    """Write ``profile_<i>.gfn`` files and ``decomposition.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    refs = []
    for i, V in enumerate(dec.profiles, start=1):
        name = f"profile_{i}.gfn"
        write_gfn(V, os.path.join(directory, name))
        refs.append(name)
    last = dec.labels[-1] if dec.labels else None
    table = []
    if last is not None:
        for k in range(dec.k + 1):
            table.append(norm_expansion_check(dec, last, k).to_dict())
    doc = {
        "schema_version": 1,
        "p": dec.params.p,
        "dim": dec.params.dim,
        "p_star": None if math.isinf(dec.params.p_star) else dec.params.p_star,
        "labels": list(dec.labels),
        "profiles": [
            {"i": i, "file": refs[i - 1], "centers": [list(c) for c in dec.centers[i - 1]],
             "radii": dec.radii[i - 1], "truncation_radius": dec.truncation_radii[i - 1],
             "tail_oscillation_l2": dec.oscillation[i - 1],
             "lp_power": lp_power(dec.profiles[i - 1], dec.params.p)}
            for i in range(1, dec.k + 1)
        ],
        "norm_table": table,
        "series_constants": None if dec.series_constants is None else list(dec.series_constants),
        "A": dec.A,
        "report": json.loads(dec.report.to_json()),
    }
    with open(os.path.join(directory, "decomposition.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return doc
