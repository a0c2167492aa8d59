import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from srbkit import srb
from srbkit.systems import (CAT_LAMBDA, attractor_sample, fat_cat, inverse_on_attractor,
                            solenoid, warped_solenoid)


def _point(sys, seed):
    return attractor_sample(sys, 1, 50, seed=seed)[0]


def test_fat_cat_unstable_jacobian_is_lambda():
    sys = fat_cat()
    x = _point(sys, 0)
    Eu, _ = sys.known_splitting(x)
    assert srb.unstable_jacobian(sys, x, Eu) == pytest.approx(CAT_LAMBDA, rel=1e-13)


def test_solenoid_jacobian_product_telescopes():
    # Df(1, w) = 2(1, w∘f), so ∏ Jᵘ(z₋ₖ) = 2ᴺ s(z)/s(z₋ₙ) with s = |(1, w)|
    sys = solenoid()
    N = 12
    for seed in range(3):
        z = _point(sys, seed)
        logJ, paths = srb.backward_log_jacobians(sys, z[None, :], N)
        s = lambda p: 1.0 / abs(sys.known_splitting(p)[0][0, 0])  # noqa: E731
        expected = N * np.log(2.0) + np.log(s(z)) - np.log(s(paths[0, N]))
        assert logJ[0].sum() == pytest.approx(expected, abs=1e-9)


def test_solenoid_density_is_uniform_in_the_angle():
    sys = solenoid()
    disc = srb.unstable_disc(sys, _point(sys, 1), nodes=65)
    prof = srb.srb_density(sys, disc, N=30)
    assert np.allclose(prof.param_values, prof.param_values.mean(), rtol=1e-8)
    assert np.sum(prof.values * disc.weights) == pytest.approx(1.0, rel=1e-12)


def test_warped_density_positive_normalized_and_converged():
    sys = warped_solenoid()
    disc = srb.unstable_disc(sys, _point(sys, 2), nodes=65)
    prof = srb.srb_density(sys, disc, N=40)
    assert np.all(prof.values > 0)
    assert np.sum(prof.values * disc.weights) == pytest.approx(1.0, rel=1e-12)
    assert prof.certificate < 1e-8
    # a small disc, so the variation is mild but clearly nonzero
    assert np.ptp(prof.values) > 1e-4


def test_disc_weights_normalized():
    sys = fat_cat()
    disc = srb.unstable_disc(sys, _point(sys, 3), nodes=33)
    assert disc.weights.sum() == pytest.approx(1.0)
    grown = disc.grow(sys, 2)
    assert grown.weights.sum() == pytest.approx(1.0)


def test_cocycle_ratio_trivial_for_linear_cat_and_bounded_for_warped():
    cat = fat_cat()
    x = _point(cat, 4)
    y = srb.unstable_leaf_point(cat, x, 0.05)
    assert srb.cocycle_ratio(cat, x, y, 20).value == pytest.approx(1.0, abs=1e-12)
    w = warped_solenoid()
    x = _point(w, 5)
    y = srb.unstable_leaf_point(w, x, 0.05)
    cr = srb.cocycle_ratio(w, x, y, 30)
    assert cr.within_bounds
    assert cr.C < 3.0


probs = arrays(np.float64, 16, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-6)


@settings(max_examples=80, deadline=None)
@given(probs, probs)
def test_total_variation_properties(a, b):
    a, b = a / a.sum(), b / b.sum()
    assert srb.total_variation(a, a) == 0.0
    assert srb.total_variation(a, b) == pytest.approx(srb.total_variation(b, a))
    assert -1e-12 <= srb.total_variation(a, b) <= 1.0 + 1e-12


def test_ulam_doubling_density_is_uniform():
    d = srb.ulam_circle_density(lambda t: 2 * t, bins=256)
    assert np.allclose(d, 1.0, atol=1e-10)


def test_ulam_warped_matches_long_orbit_histogram():
    a = 0.5
    g = srb.warped_circle_lift(a)
    bins = 64
    ulam = srb.ulam_circle_density(g, bins=bins * 16)
    ulam = ulam.reshape(bins, 16).mean(axis=1)
    rng = np.random.default_rng(0)
    th = rng.random(20000)
    hist = np.zeros(bins)
    for k in range(300):
        th = g(th) % 1.0
        if k >= 20:
            hist += np.bincount((th * bins).astype(int), minlength=bins)
    hist = hist / hist.sum() * bins
    assert np.mean(np.abs(hist - ulam)) < 0.02
    assert ulam.mean() == pytest.approx(1.0, rel=1e-9)


def test_empirical_measure_weights_and_pushforward():
    sys = solenoid()
    disc = srb.unstable_disc(sys, _point(sys, 6), nodes=33)
    mu = srb.empirical_srb(sys, disc, 20)
    assert mu.weights.sum() == pytest.approx(1.0)
    assert mu.points.shape == (20 * 33, 3)
    nu = srb.push_forward(sys, mu)
    assert np.array_equal(nu.weights, mu.weights)
    masses = srb.cell_masses(sys, mu, bins=4)
    assert masses.sum() == pytest.approx(1.0)


def test_conditional_density_flags_point_mass_as_singular():
    sys = solenoid()
    x = _point(sys, 7)
    mu = srb.EmpiricalMeasure(x[None, :], np.ones(1))
    res = srb.conditional_density_check(sys, mu, x, eps=1e-3, rho=0.02, bins=16)
    assert res["singular"]


def test_conditional_density_accepts_pushed_disc():
    sys = solenoid()
    X = attractor_sample(sys, 1, 60, seed=8)
    disc = srb.unstable_disc(sys, X[0], nodes=2049).grow(sys, 3)
    mu = srb.empirical_srb(sys, disc, 12)
    x = mu.points[len(mu.points) // 2]
    res = srb.conditional_density_check(sys, mu, x, eps=0.05, rho=0.02, bins=8, N=20,
                                        min_support=100, min_per_piece=40)
    assert not res["singular"]
    assert res["l1"] < 0.5


def test_birkhoff_kernel_matches_plain_composition():
    sys = fat_cat()
    x = _point(sys, 9)
    phi = srb.TrigObservable((1.0, 0.0, 0.0), 0.3)
    fast = srb.birkhoff_average(sys, x, phi, 50)
    exact = srb.birkhoff_average(sys, x, phi, 50, exact=True)
    assert fast == pytest.approx(exact, abs=1e-9)


def test_perturbed_plane_gap():
    E = np.eye(3)[:, :2]
    P = srb.perturbed_plane(E, 0.1, seed=1)
    from srbkit.cocycle import kato_gap
    assert kato_gap(E, P) == pytest.approx(0.05, rel=1e-6)
