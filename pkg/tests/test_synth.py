import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.spatial.distance import pdist

from ccdecomp.concfun import RadiusGrid, concentration_curve
from ccdecomp.measures import Ball, ball_mass
from ccdecomp.sobolev import grad_power, lp_power
from ccdecomp.synth import (BumpSpec, GroundTruth, SplitMix64, gen_constant_cluster,
                            gen_dichotomy, gen_multibubble_sobolev, gen_random_measure,
                            gen_spreading_sobolev, gen_vanishing)


def test_splitmix_reference_stream():
    # published test vector for seed 1234567
    assert [int(x) for x in SplitMix64(1234567).next_u64(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


def test_splitmix_blocks_continue_the_stream():
    a = SplitMix64(99)
    b = SplitMix64(99)
    assert np.array_equal(np.concatenate([a.next_u64(3), a.next_u64(4)]), b.next_u64(7))


@given(st.integers(0, 2 ** 64 - 1))
def test_uniform_range(seed):
    u = SplitMix64(seed).uniform(64)
    assert np.all((u >= 0) & (u < 1))
    z = SplitMix64(seed).normal(7)
    assert z.shape == (7,) and np.all(np.isfinite(z))


def test_random_measure():
    m0 = gen_random_measure(10, 2, 0.0, seed=1)
    assert m0.total == 0.0 and len(m0) == 0  # zero weights are dropped by the measure
    a, b = gen_random_measure(30, 3, 1.0, 5), gen_random_measure(30, 3, 1.0, 5)
    assert a.same_as(b)
    assert not a.same_as(gen_random_measure(30, 3, 1.0, 6))
    big = gen_random_measure(1000, 2, 3.7, 8)
    assert abs(big.total - 3.7) <= 1e-12
    assert np.all((big.points >= 0) & (big.points < 1))
    with pytest.raises(ValueError):
        gen_random_measure(-1, 2, 1.0, 0)


def test_vanishing_fixture():
    seq, truth = gen_vanishing(8, 2, seed=3)
    assert truth.verdict == "Vanishing"
    m1 = seq[0]
    assert len(m1) == 1 and m1.weights.tolist() == [1.0]
    m4 = seq[3]
    assert pdist(m4.points).min() >= 4
    curve = concentration_curve(m4, RadiusGrid([0.5, 1.0, 3.999]))
    assert np.all(curve.values == 0.25)
    for n, m in zip(seq.labels, seq):
        assert len(m) == n and m.total == pytest.approx(1.0, rel=1e-12)
        if n > 1:
            assert pdist(m.points).min() >= n
    with pytest.raises(ValueError):
        gen_vanishing(1, 2, 0)


def test_generators_are_pure():
    a, _ = gen_dichotomy([0.6, 0.4], 2.0, 10, 2, seed=4, cluster_atoms=5, cluster_radius=0.3,
                         dust=0.1)
    b, _ = gen_dichotomy([0.6, 0.4], 2.0, 10, 2, seed=4, cluster_atoms=5, cluster_radius=0.3,
                         dust=0.1)
    assert all(x.same_as(y) for x, y in zip(a, b))


@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=4), st.integers(1, 3),
       st.integers(0, 2 ** 32))
def test_dichotomy_truth_matches_ball_masses(masses, dim, seed):
    seq, truth = gen_dichotomy(masses, 3.0, 8, dim, seed, cluster_atoms=4, cluster_radius=0.3,
                               dust=0.1)
    assert sum(truth.masses) <= truth.mass_bound
    for k, m in enumerate(seq):
        for i, want in enumerate(truth.masses):
            got = ball_mass(m, Ball(truth.trajectories[i][k], truth.radii[i] + 1e-9))
            assert abs(got - want) <= 1e-12


def test_dichotomy_verdicts():
    assert gen_dichotomy([1.0], 1.0, 5, 2, 0)[1].verdict == "Concentration"
    assert gen_dichotomy([0.5, 0.5], 1.0, 5, 2, 0)[1].verdict == "Dichotomy"
    with pytest.raises(ValueError):
        gen_dichotomy([0.5, -0.1], 1.0, 5, 2, 0)


def test_constant_cluster():
    seq, truth = gen_constant_cluster(2.0, 6, 0.5, 5, 3, seed=2)
    assert all(m.same_as(seq[0]) for m in seq)
    assert ball_mass(seq[0], Ball(truth.trajectories[0][0], 0.5 + 1e-12)) == pytest.approx(2.0)


def test_ground_truth_mass_check():
    with pytest.raises(ValueError):
        GroundTruth(masses=[0.6, 0.6], mass_bound=1.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("p", [2.0, 3.0])
def test_bump_norms_against_quadrature(dim, p):
    b = BumpSpec(0.7, 1.3)
    area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    lp, _ = integrate.quad(lambda r: area * r ** (dim - 1) * abs(b(np.array([r])) ) ** p,
                           0, b.radius, epsabs=0, epsrel=1e-13)
    assert b.lp_norm_p(p, dim) == pytest.approx(lp, rel=1e-10)

    def grad2(r):
        s = r * r / b.radius ** 2
        return (4 * b.amplitude * r * (1 - s) / b.radius ** 2) ** 2

    g2, _ = integrate.quad(lambda r: area * r ** (dim - 1) * grad2(r), 0, b.radius,
                           epsabs=0, epsrel=1e-13)
    assert b.grad_norm_2(dim) == pytest.approx(g2, rel=1e-10)


def test_bump_grid_norms_converge():
    b = BumpSpec(1.0, 1.0)
    us, _ = gen_multibubble_sobolev([b], [np.zeros((1, 2))], 1, (201, 201), 0.01,
                                    origin=(-1.0, -1.0))
    assert lp_power(us[0], 2) == pytest.approx(b.lp_norm_p(2, 2), rel=1e-6)
    assert grad_power(us[0], 2) == pytest.approx(b.grad_norm_2(2), rel=1e-3)


def test_multibubble_fixture():
    profiles = [BumpSpec(1.0, 0.5), BumpSpec(0.5, 0.5)]
    us, truth = gen_multibubble_sobolev(profiles, [lambda n: (-0.5 * n, 0.0),
                                                   lambda n: (0.5 * n, 0.0)], 4, (64, 64), 0.1,
                                        origin=(-3.15, -3.15))
    assert truth.masses == pytest.approx([p.lp_norm_p(2, 2) for p in profiles])
    assert truth.masses[1] / truth.masses[0] == pytest.approx(0.25)
    node = (truth.trajectories[0] - (-3.15)) / 0.1
    assert np.allclose(node, np.round(node))
    with pytest.raises(ValueError, match="leaves the grid"):
        gen_multibubble_sobolev(profiles, [lambda n: (-1.0 * n, 0.0), lambda n: (n, 0.0)],
                                4, (64, 64), 0.1, origin=(-3.15, -3.15))


def test_multibubble_vanishing_term():
    vanish = {"amplitude": 0.3, "radius": 0.3, "count": lambda n: n}
    a, _ = gen_multibubble_sobolev([], [], 5, (64, 64), 0.1, seed=3, vanishing=vanish)
    b, _ = gen_multibubble_sobolev([], [], 5, (64, 64), 0.1, seed=3, vanishing=vanish)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    l2 = [lp_power(u, 2) for u in a]
    assert l2 == pytest.approx([l2[0]] * 5, rel=1e-9)  # n copies at amplitude n^{-1/2}


def test_oscillation_term():
    V = BumpSpec(1.0, 0.8)
    geo = dict(origin=(-3.175, -3.175))
    plain, _ = gen_multibubble_sobolev([V], [lambda n: (0.0, 0.0)], 1, (128, 128), 0.05, **geo)
    diffs = []
    for k in (10.0, 20.0):
        osc = {"amplitude": 2.0, "radius": 0.8, "frequency": lambda n, k=k: k}
        wavy, _ = gen_multibubble_sobolev([V], [lambda n: (0.0, 0.0)], 1, (128, 128), 0.05,
                                          oscillation=osc, **geo)
        diffs.append(wavy[0] - plain[0])
    # the L^2 size follows eps = b h / sin(k h); the gradient size stays put
    l2 = [lp_power(d, 2) ** 0.5 for d in diffs]
    g2 = [grad_power(d, 2) ** 0.5 for d in diffs]
    assert l2[1] / l2[0] == pytest.approx(math.sin(0.5) / math.sin(1.0), rel=0.01)
    assert g2[1] / g2[0] == pytest.approx(1.0, rel=0.1)
    with pytest.raises(ValueError, match="resolved"):
        gen_multibubble_sobolev([V], [lambda n: (0.0, 0.0)], 1, (128, 128), 0.05,
                                oscillation={"amplitude": 2.0, "radius": 0.8,
                                             "frequency": lambda n: 40.0}, **geo)


def test_spreading_family():
    us, truth = gen_spreading_sobolev(10, (96, 96), 0.1, 2.0)
    assert truth.verdict == "Vanishing"
    w = [lp_power(u, 2) + grad_power(u, 2) for u in us]
    assert w == pytest.approx([w[0]] * 10, rel=1e-12)
    with pytest.raises(ValueError, match="fit"):
        gen_spreading_sobolev(200, (32, 32), 0.1, 2.0)
