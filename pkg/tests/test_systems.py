import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srbkit.errors import OrbitEscapesBasin
from srbkit.systems import (CAT_LAMBDA, attractor_epsilon, attractor_sample, fat_cat,
                            galerkin_rd, inverse_on_attractor, iterate, linear, make_system,
                            skew_unstable_slope, solenoid, warped_solenoid)

SYSTEMS = [solenoid(), warped_solenoid(), fat_cat()]


@pytest.mark.parametrize("sys", SYSTEMS + [galerkin_rd(n_modes=6)], ids=lambda s: s.name)
def test_derivative_matches_central_differences(sys):
    rng = np.random.default_rng(1)
    x = attractor_sample(sys, 3, 5, seed=2)[1] if sys.name != "galerkin-rd" else \
        0.1 * rng.standard_normal(sys.dim)
    h = 1e-6
    fd = np.empty((sys.dim, sys.dim))
    for j in range(sys.dim):
        e = np.zeros(sys.dim)
        e[j] = h
        fd[:, j] = sys.displacement(sys.map_eval(x - e), sys.map_eval(x + e)) / (2 * h)
    assert np.allclose(sys.deriv_eval(x), fd, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(th=st.floats(0, 1, exclude_max=True), y=st.floats(-0.6, 0.6), z=st.floats(-0.6, 0.6),
       warp=st.sampled_from([0.0, 0.5]))
def test_skew_inverse_round_trip(th, y, z, warp):
    sys = solenoid() if warp == 0.0 else warped_solenoid(a=warp)
    x = np.array([th, y, z])
    back = sys.known_inverse(sys.map_eval(x))
    assert sys.distance(back, x) < 1e-9


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0, 1, exclude_max=True), y=st.floats(0, 1, exclude_max=True),
       z=st.floats(-1, 1))
def test_cat_inverse_round_trip(x, y, z):
    sys = fat_cat()
    p = np.array([x, y, z])
    assert sys.distance(sys.known_inverse(sys.map_eval(p)), p) < 1e-12


def test_backward_orbit_residuals_small():
    for sys in SYSTEMS:
        y = attractor_sample(sys, 1, 40, seed=3)[0]
        bo = inverse_on_attractor(sys, y, 25)
        assert bo.depth == 25
        assert bo.residuals.max() <= 1e-10


def test_iterate_rejects_points_outside_basin():
    with pytest.raises(OrbitEscapesBasin):
        iterate(solenoid(), [0.1, 5.0, 0.0], 3)


def test_attractor_sample_within_epsilon_of_fiber_disc():
    sys = solenoid()
    X = attractor_sample(sys, 500, 30, seed=0)
    # the attractor lies inside the fiber disc of radius ½/(1−λc)
    assert np.all(np.linalg.norm(X[:, 1:], axis=1) <= sys.metadata["fiber_radius"] + 1e-12)
    assert attractor_epsilon(sys, 30) < 1e-17


def test_solenoid_metadata():
    m = solenoid().metadata
    assert m["lambda_c"] == 0.25
    assert m["exponents"] == [[np.log(2.0), 1], [np.log(0.25), 2]]
    assert fat_cat().metadata["c"] == 0.2
    assert fat_cat().metadata["lambda_max"] == pytest.approx(CAT_LAMBDA)


def test_unstable_slope_is_invariant():
    sys = warped_solenoid()
    x = attractor_sample(sys, 1, 50, seed=4)[0]
    Eu_x, _ = sys.known_splitting(x)
    Eu_fx, _ = sys.known_splitting(sys.map_eval(x))
    v = sys.deriv_eval(x) @ Eu_x[:, 0]
    v /= np.linalg.norm(v)
    assert min(np.linalg.norm(v - Eu_fx[:, 0]), np.linalg.norm(v + Eu_fx[:, 0])) < 1e-10


def test_unstable_slope_solenoid_recursion_closed_form():
    # constant backward angle θ = 0 gives w = c(0)/(2 − λc)
    w = skew_unstable_slope(np.zeros(60), 0.25, 0.0)
    assert np.allclose(w, [0.0, np.pi / (2 - 0.25)])


def test_linear_factory_and_make_system():
    sys = make_system("linear", matrix=[[2.0, 0.0], [0.0, 0.5]])
    assert sys.unstable_dim == 1
    Eu, Es = sys.known_splitting(np.zeros(2))
    assert np.allclose(Eu[:, 0], [1, 0]) and np.allclose(Es[:, 0], [0, 1])
    with pytest.raises(KeyError):
        make_system("nope")
    with pytest.raises(ValueError):
        warped_solenoid(a=1.5)
    assert linear([[3.0]]).unstable_dim == 1
