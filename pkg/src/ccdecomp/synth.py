"""Seeded generators of measure sequences and grid-function families.

All randomness comes from :class:`SplitMix64`, a 64-bit counter-based
generator whose stream is fully determined by its seed (Steele, Lea and
Flood's mixing function), so fixtures are reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure, MeasureSequence

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """SplitMix64 stream; draws are vectorised over a block of counters."""

    def __init__(self, seed):
        self.state = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)

    def next_u64(self, count):
        with np.errstate(over="ignore"):
            steps = np.arange(1, count + 1, dtype=np.uint64)
            z = self.state + steps * _GAMMA
            self.state = self.state + np.uint64(count) * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
            return z ^ (z >> np.uint64(31))

    def uniform(self, count, low=0.0, high=1.0):
        """Doubles in ``[low, high)`` from the top 53 bits."""
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return low + (high - low) * u

    def normal(self, count):
        """Standard normals by the Box-Muller transform."""
        half = (count + 1) // 2
        u1 = 1.0 - self.uniform(half)  # in (0, 1]
        u2 = self.uniform(half)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
        return z[:count]

    def integers(self, count, high):
        return (self.next_u64(count) % np.uint64(high)).astype(np.int64)


@dataclass
class GroundTruth:
    masses: list
    trajectories: list = field(default_factory=list)  # per bubble, (n_max, dim) centers
    radii: list = field(default_factory=list)  # per bubble, ball radius holding all its atoms
    vanishing: dict = field(default_factory=dict)
    oscillation: dict = field(default_factory=dict)
    verdict: str = ""
    mass_bound: float = 0.0

    def __post_init__(self):
        if sum(self.masses) > self.mass_bound + 1e-12:
            raise ValueError("planted masses exceed the declared mass bound")


def gen_random_measure(n_atoms, dim, mass, seed):
    """Uniform atoms in the unit box with random weights summing to ``mass``.

    ``mass = 0`` yields zero weights, which the measure drops.
    """
    if n_atoms < 0:
        raise ValueError("n_atoms must be nonnegative")
    rng = SplitMix64(seed)
    pts = rng.uniform(n_atoms * dim).reshape(n_atoms, dim)
    raw = 1.0 - rng.uniform(n_atoms)
    w = raw / math.fsum(raw) * mass if n_atoms else raw
    return DiscreteMeasure(pts, w, dim=dim)


def _lattice(count, dim, spacing):
    side = max(1, math.ceil(count ** (1.0 / dim) - 1e-9))
    while side ** dim < count:
        side += 1
    idx = np.array(list(np.ndindex(*(side,) * dim))[:count], dtype=float)
    return idx * spacing


def gen_vanishing(n_max, dim, seed, start=1):
    """``mu_n``: ``n`` atoms of weight ``1/n`` with pairwise distances at least ``n``.

    Atoms sit on a lattice of spacing ``2n``, each pushed by at most ``n/2``.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    rng = SplitMix64(seed)
    items = []
    for n in range(start, n_max + 1):
        base = _lattice(n, dim, 2.0 * n)
        jitter = rng.uniform(n * dim, -1.0, 1.0).reshape(n, dim) * (n / (2.0 * math.sqrt(dim)))
        offset = rng.uniform(dim, -10.0 * n, 10.0 * n)
        items.append(DiscreteMeasure(base + jitter + offset, np.full(n, 1.0 / n), dim=dim))
    seq = MeasureSequence(tuple(items), tuple(range(start, n_max + 1)))
    truth = GroundTruth(masses=[], verdict="Vanishing", mass_bound=1.0,
                        vanishing={"mass": 1.0, "min_spacing": "n"})
    return seq, truth


def cluster_shape(mass, atoms, radius, dim, rng):
    """Fixed cluster: ``atoms`` points within ``radius`` of the origin, weights summing to ``mass``."""
    if atoms == 1:
        return np.zeros((1, dim)), np.array([float(mass)])
    dirs = rng.normal(atoms * dim).reshape(atoms, dim)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = radius * rng.uniform(atoms) ** (1.0 / dim)
    pts = dirs * rad[:, None]
    pts[0] = 0.0
    raw = 0.5 + rng.uniform(atoms)
    return pts, raw / math.fsum(raw) * mass


def gen_dichotomy(masses, separation_rate, n_max, dim, seed, cluster_atoms=1,
                  cluster_radius=0.0, dust=0.0, start=1):
    """Clusters of fixed shape moving apart linearly in ``n``, plus optional dust.

    Cluster ``i`` is centred at ``i * separation_rate * n * e_1``.  Dust of
    total mass ``dust`` is split over ``n`` atoms of weight ``dust/n``, spaced
    ``max(n, 1)`` apart along ``e_1`` and starting ``2 * separation_rate * n``
    past the last cluster, so every ball that stays inside the cluster gaps
    misses it.
    """
    masses = [float(m) for m in masses]
    if not masses or any(m <= 0 for m in masses):
        raise ValueError("masses must be positive")
    rng = SplitMix64(seed)
    shapes = [cluster_shape(m, cluster_atoms, cluster_radius, dim, rng) for m in masses]
    e1 = np.zeros(dim)
    e1[0] = 1.0
    items, traj = [], [[] for _ in masses]
    for n in range(start, n_max + 1):
        pts, ws = [], []
        for i, (shape, w) in enumerate(shapes):
            c = i * separation_rate * n * e1
            traj[i].append(c)
            pts.append(shape + c)
            ws.append(w)
        if dust > 0:
            x0 = (len(masses) - 1 + 2.0) * separation_rate * n
            along = x0 + np.arange(n) * max(float(n), 1.0)
            dp = np.zeros((n, dim))
            dp[:, 0] = along
            pts.append(dp)
            ws.append(np.full(n, dust / n))
        items.append(DiscreteMeasure(np.concatenate(pts), np.concatenate(ws), dim=dim))
    seq = MeasureSequence(tuple(items), tuple(range(start, n_max + 1)))
    radii = [float(np.max(np.linalg.norm(s, axis=1))) for s, _ in shapes]
    verdict = "Concentration" if len(masses) == 1 and dust == 0 else "Dichotomy"
    truth = GroundTruth(masses=masses, trajectories=[np.array(t) for t in traj], radii=radii,
                        vanishing={"mass": dust}, verdict=verdict,
                        mass_bound=sum(masses) + dust)
    return seq, truth


def gen_constant_cluster(mass, atoms, radius, n_max, dim, seed):
    """The same cluster repeated ``n_max`` times: a concentrating sequence."""
    rng = SplitMix64(seed)
    pts, w = cluster_shape(mass, atoms, radius, dim, rng)
    offset = rng.uniform(dim, -1.0, 1.0)
    m = DiscreteMeasure(pts + offset, w, dim=dim)
    seq = MeasureSequence(tuple(m for _ in range(n_max)))
    truth = GroundTruth(masses=[float(mass)], trajectories=[np.tile(offset, (n_max, 1))],
                        radii=[float(radius)], verdict="Concentration", mass_bound=float(mass))
    return seq, truth


# ----------------------------------------------------------- bump profiles

@dataclass(frozen=True)
class BumpSpec:
    """``amplitude * (1 - |x|^2 / radius^2)^2`` on the ball of ``radius``, zero outside."""

    amplitude: float
    radius: float

    def __call__(self, x):
        s = np.sum(np.asarray(x) ** 2, axis=-1) / self.radius ** 2
        return self.amplitude * np.where(s < 1.0, (1.0 - s) ** 2, 0.0)

    def lp_norm_p(self, p, dim):
        """Closed form of ``int |bump|^p`` via the Beta integral."""
        area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
        beta = math.gamma(dim / 2) * math.gamma(2 * p + 1) / math.gamma(dim / 2 + 2 * p + 1)
        return abs(self.amplitude) ** p * area * self.radius ** dim * beta / 2

    def grad_norm_2(self, dim):
        """Closed form of ``int |grad bump|^2``."""
        # |grad| = 4 A s^{1/2} (1 - s) / R with s = |x|^2/R^2
        area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
        # int_0^R (16 A^2/R^2) (r^2/R^2) (1 - r^2/R^2)^2 r^{N-1} dr
        b = math.gamma(dim / 2 + 1) * math.gamma(3) / math.gamma(dim / 2 + 4)
        return 16 * self.amplitude ** 2 * area * self.radius ** (dim - 2) * b / 2


def gen_multibubble_sobolev(profiles, trajectories, n_max, shape, spacing, origin=None,
                            seed=0, vanishing=None, oscillation=None):
    """``u_n = sum_i V^i(x - y_n^i)`` on a fixed grid, with node-aligned centers.

    ``trajectories[i]`` is a callable ``n -> center`` or an ``(n_max, dim)``
    array; centers are snapped to the nearest node.  ``vanishing`` adds a
    spreading term: a dict with ``amplitude``, ``radius`` and ``count(n)``
    giving ``count(n)`` low bumps of height ``amplitude * count(n)**(-1/2)``
    placed at seeded random nodes at least four radii from everything else.

    ``oscillation`` rides on profile 0: a dict with ``amplitude`` ``b``,
    ``frequency(n)`` ``k_n`` and ``radius``, adding
    ``eps_n sin(k_n (x_1 - y_1) + n pi/2) * envelope(x - y)`` where the
    envelope is a unit bump of that radius and ``eps_n = b h / sin(k_n h)``
    keeps the centred difference gradient at height ``b``.  Its ``L^p``
    size falls like ``1/k_n`` while its gradient does not.
    """
    from .sobolev import GridFunction

    shape = tuple(int(s) for s in shape)
    dim = len(shape)
    origin = np.zeros(dim) if origin is None else np.asarray(origin, float)
    template = GridFunction(np.zeros(shape), spacing, origin)
    coords = template.node_coords().reshape(*shape, dim)
    lo = origin
    hi = origin + (np.array(shape) - 1) * spacing
    rng = SplitMix64(seed)
    us, traj = [], [[] for _ in profiles]
    for n in range(1, n_max + 1):
        vals = np.zeros(shape)
        placed = []
        for i, (prof, path) in enumerate(zip(profiles, trajectories)):
            c = np.asarray(path(n) if callable(path) else path[n - 1], dtype=float)
            c = lo + np.round((c - lo) / spacing) * spacing
            if np.any(c - prof.radius < lo - 1e-12) or np.any(c + prof.radius > hi + 1e-12):
                raise ValueError(f"profile {i} leaves the grid at n={n}")
            traj[i].append(c)
            placed.append((c, prof.radius))
            vals = vals + prof(coords - c)
            if oscillation is not None and i == 0:
                k = float(oscillation["frequency"](n))
                if not 0 < k * spacing < math.pi / 2:
                    raise ValueError("oscillation frequency is not resolved by the grid")
                eps = oscillation["amplitude"] * spacing / math.sin(k * spacing)
                env = BumpSpec(1.0, oscillation["radius"])(coords - c)
                vals = vals + eps * np.sin(k * (coords[..., 0] - c[0]) + n * math.pi / 2) * env
        if vanishing is not None:
            cnt = int(vanishing["count"](n))
            amp = vanishing["amplitude"] * cnt ** -0.5
            bump = BumpSpec(amp, vanishing["radius"])
            for _ in range(cnt):
                for _attempt in range(1000):
                    c = lo + bump.radius + rng.uniform(dim) * (hi - lo - 2 * bump.radius)
                    c = lo + np.round((c - lo) / spacing) * spacing
                    if all(np.linalg.norm(c - q) > 4 * max(bump.radius, r) for q, r in placed):
                        break
                else:
                    raise ValueError("could not place the vanishing bumps on the grid")
                placed.append((c, bump.radius))
                vals = vals + bump(coords - c)
        us.append(GridFunction(vals, spacing, origin))
    truth = GroundTruth(masses=[p.lp_norm_p(2, dim) for p in profiles],
                        trajectories=[np.array(t) for t in traj],
                        radii=[p.radius for p in profiles],
                        vanishing={} if vanishing is None else dict(vanishing),
                        oscillation={} if oscillation is None else dict(oscillation),
                        verdict="Vanishing" if not profiles else "Dichotomy" if len(profiles) > 1
                        else "Concentration",
                        mass_bound=math.inf)
    return us, truth


def gen_spreading_sobolev(n_max, shape, spacing, p, bump=BumpSpec(1.0, 0.5), start=1):
    """``u_n``: ``n`` disjoint copies of ``bump / n**(1/p)`` on a square lattice.

    Every ``u_n`` has the same ``W^{1,p}`` norm while each ``L^q`` norm with
    ``q > p`` falls like ``n**(1/q - 1/p)``.  Copies sit ``4 * radius`` apart
    around the grid center; raises when ``n_max`` copies do not fit.
    """
    from .sobolev import GridFunction

    shape = tuple(int(s) for s in shape)
    dim = len(shape)
    origin = -(np.array(shape) - 1) / 2.0 * spacing
    template = GridFunction(np.zeros(shape), spacing, origin)
    coords = template.node_coords().reshape(*shape, dim)
    gap = math.ceil(4 * bump.radius / spacing) * spacing
    us, traj = [], []
    for n in range(start, n_max + 1):
        pos = _lattice(n, dim, gap)
        pos = pos - np.round(pos.mean(axis=0) / spacing) * spacing
        if np.any(np.abs(pos) + bump.radius > -origin + 1e-12):
            raise ValueError(f"{n} copies do not fit on the grid")
        vals = np.zeros(shape)
        scaled = BumpSpec(bump.amplitude * n ** (-1.0 / p), bump.radius)
        for c in pos:
            vals = vals + scaled(coords - c)
        us.append(GridFunction(vals, spacing, origin))
        traj.append(pos)
    truth = GroundTruth(masses=[], trajectories=traj, radii=[bump.radius],
                        vanishing={"p": p, "bump": bump}, verdict="Vanishing",
                        mass_bound=math.inf)
    return us, truth
