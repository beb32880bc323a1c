import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ccdecomp.extraction import ExtractionConfig
from ccdecomp.sobolev import (GridFunction, SobolevParams, chi, critical_exponent,
                              cutoff_partition, decomposition_to_json, density_rho, gradient,
                              grad_power, lemma41_check, lemma41_ratio, local_uniform_mass,
                              lp_norm, lp_power, norm_expansion_check, profile_extract,
                              read_gfn, remainder_split, w1p_norm, write_gfn)
from ccdecomp.synth import BumpSpec, SplitMix64, gen_multibubble_sobolev, gen_spreading_sobolev


def gaussian_grid(h, half_width=6.0, dim=2, a=1.0):
    n = int(round(2 * half_width / h)) + 1
    g = GridFunction(np.zeros((n,) * dim), h, np.full(dim, -half_width))
    x = g.node_coords()
    return g.with_values(np.exp(-a * np.sum(x * x, axis=1)).reshape(g.shape))


# --------------------------------------------------------------- geometry

def test_grid_function_validation():
    with pytest.raises(ValueError):
        GridFunction(np.zeros((2, 5)), 0.1)
    with pytest.raises(ValueError):
        GridFunction(np.zeros(5), 0.0)
    with pytest.raises(ValueError):
        GridFunction(np.array([0.0, np.nan, 0.0]), 1.0)
    with pytest.raises(ValueError):
        GridFunction(np.zeros((3, 3)), 1.0, np.zeros(3))


def test_gfn_round_trip(tmp_path):
    rng = SplitMix64(4)
    g = GridFunction(rng.normal(60).reshape(3, 4, 5), 0.25, np.array([-1.0, 0.5, 2.0]))
    write_gfn(g, tmp_path / "g.gfn")
    back = read_gfn(tmp_path / "g.gfn")
    assert back.same_geometry(g) and np.array_equal(back.values, g.values)
    raw = (tmp_path / "g.gfn").read_bytes()
    assert raw[:4] == b"GFN1"
    (tmp_path / "bad.gfn").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="expected 60 values"):
        read_gfn(tmp_path / "bad.gfn")
    (tmp_path / "magic.gfn").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="GFN1"):
        read_gfn(tmp_path / "magic.gfn")


def test_params_critical_exponent():
    assert critical_exponent(2, 3) == 6
    assert critical_exponent(2, 2) == math.inf
    assert SobolevParams(1.5, 3).p_star == pytest.approx(3.0)
    with pytest.raises(ValueError, match=r"q must lie in \(p, p\*\)"):
        SobolevParams(2, 3, q_list=(7,))
    with pytest.raises(ValueError):
        SobolevParams(1.0, 2)
    assert SobolevParams(2, 2).exponents() == (3, 4, 5)


# --------------------------------------------------------------- gradient

def test_gradient_constant():
    g = GridFunction(np.full((5, 6), 3.5), 0.2)
    assert np.all(gradient(g) == 0)


def test_gradient_linear_exact():
    g = GridFunction(np.arange(9) * 0.5, 0.5)  # u(x) = x on nodes 0, 0.5, ...
    assert np.all(gradient(g)[0] == 1.0)


def test_gradient_second_order():
    def err(h):
        g = gaussian_grid(h, half_width=5.0)
        x = g.node_coords()
        exact = -2 * x.T * g.values.reshape(-1)
        return np.abs(gradient(g).reshape(2, -1) - exact).max()

    ratio = err(0.1) / err(0.05)
    assert 3.8 < ratio < 4.2


# ---------------------------------------------------------------- density

def test_density_zero():
    g = GridFunction(np.zeros((5, 5, 5)), 0.3)
    assert np.all(density_rho(g, SobolevParams(2, 3)).values == 0)


def test_density_spike():
    v = np.zeros((5, 5, 5))
    v[2, 2, 2] = 1.7
    rho = density_rho(GridFunction(v, 0.5), SobolevParams(2, 3))
    assert rho.values[2, 2, 2] == 1.7 ** 2 + 1.7 ** 6
    # neighbours along an axis see the central difference 1.7 / (2h)
    assert rho.values[3, 2, 2] == pytest.approx((1.7 / 1.0) ** 2, rel=1e-15)


def test_density_needs_series_parameters():
    g = gaussian_grid(0.5)
    with pytest.raises(ValueError, match="series constants"):
        density_rho(g, SobolevParams(2, 2))
    with pytest.raises(ValueError, match="dimension"):
        density_rho(g, SobolevParams(2, 3))


CONSTS, A = (1.0, 1.5, 2.0), 1.3
SERIES = SobolevParams(2, 2, series_constants=CONSTS)


def _separable_lattice_sum(h, half_width):
    """The same Riemann sum from 1-D factors of ``exp(-x^2 - y^2)``."""
    n = int(round(2 * half_width / h)) + 1
    x = -half_width + h * np.arange(n)
    g = np.exp(-x * x)
    d = np.gradient(g, h, edge_order=1)
    total = 2 * math.fsum(d * d) * math.fsum(g * g) + math.fsum(g * g) ** 2
    for l, (s, c) in enumerate(zip((3, 4, 5), CONSTS), start=1):
        total += math.fsum(g ** s) ** 2 / (2 ** l * (c * A) ** s)
    return total * h * h


def _continuum_reference():
    """Radial quadrature of the density of ``exp(-|x|^2)`` in the plane."""
    def f(r):
        u = math.exp(-r * r)
        val = (2 * r * u) ** 2 + u ** 2
        for l, (s, c) in enumerate(zip((3, 4, 5), CONSTS), start=1):
            val += u ** s / (2 ** l * (c * A) ** s)
        return 2 * math.pi * r * val

    value, _ = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-13)
    return value


def test_density_matches_separable_lattice_sum():
    for h in (0.1, 0.05):
        g = gaussian_grid(h)
        got = density_rho(g, SERIES, A).integral(density_rho(g, SERIES, A).values)
        assert got == pytest.approx(_separable_lattice_sum(h, 6.0), rel=1e-6)


def test_density_converges_to_quadrature():
    ref = _continuum_reference()
    closed = 1.5 * math.pi + sum(math.pi / s / (2 ** l * (c * A) ** s)
                                 for l, (s, c) in enumerate(zip((3, 4, 5), CONSTS), start=1))
    assert ref == pytest.approx(closed, rel=1e-12)
    vals = []
    for h in (0.02, 0.01):
        rho = density_rho(gaussian_grid(h), SERIES, A)
        vals.append(rho.integral(rho.values))
    assert abs(vals[1] - ref) / ref < 1e-4  # raw second-order discretisation error
    extrapolated = (4 * vals[1] - vals[0]) / 3
    assert abs(extrapolated - ref) / ref < 1e-6


# ----------------------------------------------------- local uniform mass

def test_local_mass_zero():
    assert local_uniform_mass(GridFunction(np.zeros((4, 4)), 0.5), 2) == 0.0


def test_local_mass_translation():
    u = gaussian_grid(0.1, half_width=4.0)
    shifted = u.with_values(np.roll(np.pad(u.values, 10), (7, -4), axis=(0, 1)))
    padded = GridFunction(np.pad(u.values, 10), u.spacing, u.origin - 10 * u.spacing)
    assert local_uniform_mass(shifted, 2) == pytest.approx(local_uniform_mass(padded, 2), rel=1e-12)


def test_local_mass_scales_like_one_over_n():
    us, _ = gen_spreading_sobolev(9, (96, 96), 0.1, 2.0)
    base = local_uniform_mass(us[0], 2)
    for n in (2, 4, 9):
        assert local_uniform_mass(us[n - 1], 2) * n == pytest.approx(base, rel=1e-9)


# ------------------------------------------------------- local-mass bound

def test_local_mass_bound_single_bump():
    best, rows = lemma41_check([gaussian_grid(0.1, half_width=4.0)], 2, 4)
    assert 0 < best < math.inf and len(rows) == 1


def test_local_mass_bound_scale_and_translation():
    u = GridFunction(np.pad(gaussian_grid(0.1, half_width=3.0).values, 15), 0.1)
    moved = u.with_values(np.roll(u.values, (9, -6), axis=(0, 1)))
    _, rows = lemma41_check([u, u * 2.0, u * 3.0, moved], 2, 4)
    for r in rows[1:]:
        assert r.ratio == pytest.approx(rows[0].ratio, rel=1e-9)


def test_local_mass_bound_spreading_family():
    us, _ = gen_spreading_sobolev(16, (96, 96), 0.1, 2.0)
    rows = [lemma41_ratio(u, 2, 4) for u in us]
    lq = [r.lq for r in rows]
    assert all(b < a for a, b in zip(lq, lq[1:]))
    assert max(r.ratio for r in rows) < 2 * rows[0].ratio


def test_local_mass_bound_errors():
    with pytest.raises(ValueError, match="empty"):
        lemma41_check([], 2, 4)
    with pytest.raises(ValueError, match=r"\(p, p\*\)"):
        lemma41_check([GridFunction(np.ones((3, 3, 3)), 1.0)], 2, 7)
    zero = GridFunction(np.zeros((4, 4)), 1.0)
    with pytest.raises(ValueError, match="zero"):
        lemma41_check([zero], 2, 4)
    best, rows = lemma41_check([zero, gaussian_grid(0.2, half_width=3.0)], 2, 4)
    assert math.isnan(rows[0].ratio) and best == rows[1].ratio


# -------------------------------------------------------------- cut-offs

@given(st.floats(0, 3))
def test_chi_profile(r):
    c = float(chi(r))
    assert 0 <= c <= 1
    if r <= 0.5:
        assert c == 1.0
    if r >= 1:
        assert c == 0.0


def test_chi_monotone():
    r = np.linspace(0, 1.2, 2001)
    assert np.all(np.diff(chi(r)) <= 0)


def test_cutoff_examples():
    geo = GridFunction(np.zeros((21, 21)), 0.1, np.array([-1.0, -1.0]))
    w, bg = cutoff_partition([], [], geo)
    assert w == [] and np.all(bg.values == 1)
    w, bg = cutoff_partition([[0.0, 0.0]], [0.5], geo)
    assert w[0].values[10, 10] == 1.0 and bg.values[10, 10] == 0.0
    with pytest.raises(ValueError, match="overlap"):
        cutoff_partition([[0.0, 0.0], [0.5, 0.0]], [0.3, 0.3], geo)


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32))
def test_partition_of_unity(seed):
    rng = SplitMix64(seed)
    geo = GridFunction(np.zeros((41, 41)), 0.1, np.array([-2.0, -2.0]))
    c1 = rng.uniform(2, -1.5, -0.5)
    c2 = rng.uniform(2, 0.5, 1.5)
    r1, r2 = rng.uniform(2, 0.2, 0.7)
    w, bg = cutoff_partition([c1, c2], [r1, r2], geo)
    total = w[0].values + w[1].values + bg.values
    assert np.abs(total - 1).max() <= 1e-12


# --------------------------------------------------- profile decomposition

def drifting(n_max=10, oscillation=None):
    V = BumpSpec(1.0, 0.6)
    return V, gen_multibubble_sobolev([V], [lambda n: (-2.0 + 0.3 * n, 0.5)], n_max, (96, 96),
                                      0.1, origin=(-4.75, -4.75), oscillation=oscillation)


def test_single_drifting_bump():
    V, (us, truth) = drifting()
    dec = profile_extract(us, SobolevParams(2, 2, q_list=(4,)))
    assert dec.k == 1
    P = dec.profiles[0]
    lab = dec.labels[-1]
    shift = dec.center_coords(1, lab) - truth.trajectories[0][lab - 1]
    exact = V(P.node_coords() + shift).reshape(P.shape)
    assert lp_norm(P - P.with_values(exact), 2) <= 1e-12 * lp_norm(P, 2)
    for n in dec.labels:
        assert lp_norm(dec.remainder(n, 1), 4) <= 1e-12
    rec = norm_expansion_check(dec, lab, 1)
    assert rec.residual_iii <= 1e-12 * rec.u_lp


def test_remainder_split_identity():
    V, (us, _) = drifting()
    dec = profile_extract(us, SobolevParams(2, 2))
    for n in dec.labels:
        v1, v2 = remainder_split(dec, n, 0)
        assert np.all(v1.values == 0) and np.array_equal(v2.values, dec.u_at(n).values)
        v1, v2 = remainder_split(dec, n, 1)
        rec = dec.placed(1, n).values + v1.values + v2.values
        assert np.abs(rec - dec.u_at(n).values).max() <= 1e-12


def test_profile_extract_geometry_checks():
    _, (us, _) = drifting(4)
    other = GridFunction(np.zeros((96, 96)), 0.2)
    with pytest.raises(ValueError, match="geometry"):
        profile_extract(list(us) + [other], SobolevParams(2, 2))
    with pytest.raises(ValueError, match="dimension"):
        profile_extract(us, SobolevParams(2, 3))


def test_vanishing_family_has_no_profiles():
    us, _ = gen_spreading_sobolev(12, (96, 96), 0.1, 2.0)
    dec = profile_extract(us, SobolevParams(2, 2))
    assert dec.k == 0 and dec.report.verdict == "Vanishing"
    n = dec.labels[-1]
    assert np.array_equal(dec.remainder(n, 0).values, dec.u_at(n).values)


def test_decomposition_json(tmp_path):
    _, (us, _) = drifting(8)
    dec = profile_extract(us, SobolevParams(2, 2))
    doc = decomposition_to_json(dec, tmp_path)
    again = json.loads((tmp_path / "decomposition.json").read_text())
    assert again["schema_version"] == 1 and len(again["profiles"]) == 1
    assert again["norm_table"] == json.loads(json.dumps(doc["norm_table"]))
    V = read_gfn(tmp_path / again["profiles"][0]["file"])
    assert np.array_equal(V.values, dec.profiles[0].values)


def test_two_bumps_norm_table():
    V1, V2 = BumpSpec(1.0, 0.5), BumpSpec(0.5, 0.5)
    us, truth = gen_multibubble_sobolev([V1, V2], [lambda n: (-0.3 * n, 0.0),
                                                   lambda n: (0.3 * n, 0.2)], 12, (96, 96), 0.1,
                                        origin=(-4.75, -4.75))
    assert truth.masses[1] / truth.masses[0] == pytest.approx(0.25)
    dec = profile_extract(us, SobolevParams(2, 2))
    got = sorted(lp_power(P, 2) for P in dec.profiles)
    want = sorted(truth.masses)
    assert got == pytest.approx(want, rel=0.02)
    seps = dec.separations(1, 2)
    assert np.all(np.diff(seps) > 0)
