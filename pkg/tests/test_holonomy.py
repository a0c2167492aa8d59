import numpy as np
import pytest

from srbkit import holonomy as hol
from srbkit import srb
from srbkit.errors import TooFar
from srbkit.systems import CAT_ES, CAT_EU, attractor_sample, fat_cat, solenoid, warped_solenoid


def _pair(sys, seed, scale):
    X = attractor_sample(sys, 400, 60, seed=seed)
    x = X[0]
    d = sys.distance(x, X[1:])
    j = np.argmin(np.where(d > scale / 4, d, np.inf))
    return x, X[1 + j]


def test_bracket_of_a_point_with_itself():
    sys = solenoid()
    x = attractor_sample(sys, 1, 40, seed=0)[0]
    assert np.array_equal(hol.bracket(sys, x, x), x)


def test_bracket_rejects_distant_points():
    sys = fat_cat()
    with pytest.raises(TooFar):
        hol.bracket(sys, np.array([0.1, 0.1, 0.0]), np.array([0.4, 0.4, 0.0]))


def test_fat_cat_bracket_matches_line_intersection():
    # Wˢ(x) = x + span(e_s, e_z) and Wᵘ(y) = y + span(e_u) with e_u ⊥ e_s
    sys = fat_cat()
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = np.array([*rng.random(2), 0.0])
        y = sys.wrap(x + np.array([*rng.uniform(-0.02, 0.02, 2), 0.0]))
        z, rep = hol.bracket(sys, x, y, return_report=True)
        disp = sys.displacement(x, y)[:2]
        t = -disp @ CAT_EU
        oracle = sys.wrap(y + np.array([*(t * CAT_EU), 0.0]))
        assert sys.distance(z, oracle) < 1e-10
        assert rep["residual_s"] < 1e-10
        # and the result is on x's stable line
        assert abs(sys.displacement(x, z)[:2] @ CAT_EU) < 1e-10


def test_solenoid_bracket_keeps_the_angle_of_x():
    sys = solenoid()
    x, y = _pair(sys, 1, 0.02)
    z = hol.bracket(sys, x, y)
    assert abs(sys.displacement(x, z)[0]) < 1e-10
    # z is on the unstable leaf of y: its transverse offset contracts backward
    bz = sys.backward_orbit(np.stack([y, z]), 15)
    assert sys.distance(bz[0, 15], bz[1, 15]) < 1e-4 * sys.distance(y, z)


def test_warped_bracket_residual():
    sys = warped_solenoid()
    x, y = _pair(sys, 2, 0.02)
    z, rep = hol.bracket(sys, x, y, return_report=True)
    assert rep["residual_s"] < 1e-10
    assert abs(sys.displacement(x, z)[0]) < 1e-10


def test_expansivity_pairs_separate():
    sys = fat_cat()
    rng = np.random.default_rng(4)
    pairs = []
    for _ in range(10):
        x = np.array([*rng.random(2), 0.0])
        pairs.append((x, sys.wrap(x + np.array([*rng.uniform(-1e-4, 1e-4, 2), 0.0]))))
    pairs.append((pairs[0][0], pairs[0][0]))
    rep = hol.expansivity_check(sys, pairs, eps=0.05)
    assert rep["violations"] == 0
    assert rep["identity_pairs"] == 1
    assert all(r["k"] != 0 for r in rep["pairs"] if not r["identity"])


def test_fat_cat_holonomy_is_an_isometry():
    sys = fat_cat()
    x = np.array([0.3, 0.6, 0.0])
    y = sys.wrap(x + 0.01 * np.array([*CAT_ES, 0.0]))
    D1 = srb.unstable_disc(sys, x, nodes=65)
    D2 = srb.unstable_disc(sys, y, nodes=65)
    rep = hol.holonomy_map(sys, D1, D2, n_base=200)
    assert rep.source_params.shape[0] > 150
    jac = hol.holonomy_jacobian(sys, rep, D1, D2, cell_width=0.002, min_pairs=100)
    assert np.allclose(jac["ratios"], 1.0, atol=1e-8)
    assert rep.displacement_ok
