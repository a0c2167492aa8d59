import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from srbkit.cocycle import (cluster_exponents, holder_exponent_estimate, kato_gap,
                            lyapunov_norm, lyapunov_spectrum, make_splitting, stable_subspace,
                            unstable_subspace)
from srbkit.errors import DimensionMismatch
from srbkit.systems import (CAT_LAMBDA, attractor_sample, fat_cat, inverse_on_attractor, linear,
                            solenoid, warped_solenoid)

mats = arrays(np.float64, (4, 2), elements=st.floats(-3, 3, allow_nan=False))


def _full_rank(A):
    return np.linalg.matrix_rank(A, tol=1e-6) == A.shape[1]


@settings(max_examples=80, deadline=None)
@given(mats, mats)
def test_kato_gap_is_a_symmetric_bounded_metric_value(A, B):
    if not (_full_rank(A) and _full_rank(B)):
        return
    g = kato_gap(A, B)
    assert 0.0 <= g <= np.sqrt(2) + 1e-12
    assert g == pytest.approx(kato_gap(B, A), abs=1e-12)
    assert kato_gap(A, A @ np.array([[2.0, 1.0], [0.0, -1.0]])) < 1e-6


def test_kato_gap_closed_form_for_lines():
    # two unit lines at angle t: the gap is |v − w| = 2 sin(t/2)
    for t in (0.1, 0.7, 1.3):
        g = kato_gap([1.0, 0.0], [np.cos(t), np.sin(t)])
        assert g == pytest.approx(2 * np.sin(t / 2), rel=1e-12)
    assert kato_gap(np.eye(3)[:, :1], np.eye(3)[:, :2]) == pytest.approx(np.sqrt(2))
    with pytest.raises(DimensionMismatch):
        kato_gap(np.eye(3)[:, :1], np.eye(2)[:, :1])


def test_linear_spectrum_matches_eigenvalues():
    sys = linear([[3.0, 1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.8]])
    spec = lyapunov_spectrum(sys, np.zeros(3), n=500, burn_in=10)
    assert np.allclose(spec.raw, np.log([3.0, 0.8, 0.5]), atol=1e-2)


def test_fat_cat_spectrum_and_determinant_sum():
    sys = fat_cat(c=0.2)
    x = attractor_sample(sys, 1, 10, seed=1)[0]
    spec = lyapunov_spectrum(sys, x, n=2000)
    L = np.log(CAT_LAMBDA)
    assert np.allclose(spec.raw, [L, np.log(0.2), -L][:1] + sorted([np.log(0.2), -L])[::-1],
                       atol=1e-9)
    # exponent sum equals the mean log |det Df| (here log c)
    assert spec.raw.sum() == pytest.approx(np.log(0.2), abs=1e-9)


def test_solenoid_exponents_cluster_with_multiplicity_two():
    sys = solenoid()
    x = attractor_sample(sys, 1, 50, seed=0)[0]
    spec = lyapunov_spectrum(sys, x, n=5000)
    assert spec.entries[0][0] == pytest.approx(np.log(2), abs=5e-3)
    assert spec.entries[1] == (pytest.approx(np.log(0.25), abs=1e-4), 2)
    # Df has det 2·λc² everywhere, so the sum is exact
    assert spec.raw.sum() == pytest.approx(np.log(2) + 2 * np.log(0.25), abs=1e-9)
    assert spec.dim == 3


def test_cluster_exponents_single_linkage():
    assert cluster_exponents([0.0, 0.01, 0.019, -1.0]) == [(pytest.approx(0.00966666, abs=1e-6), 3),
                                                           (-1.0, 1)]


def test_numeric_subspaces_agree_with_known_splitting():
    sys = warped_solenoid()
    x = attractor_sample(sys, 1, 60, seed=5)[0]
    Eu, Es = sys.known_splitting(x)
    bwd = inverse_on_attractor(sys, x, 45)
    assert kato_gap(unstable_subspace(sys, bwd).Eu_basis, Eu) < 1e-8
    Ecs = stable_subspace(sys, x).Ecs_basis
    assert kato_gap(Ecs, Es) < 1e-8


def test_make_splitting_projectors():
    s = make_splitting(np.array([[1.0], [1.0]]), np.array([[0.0], [1.0]]))
    assert np.allclose(s.proj_u @ s.proj_u, s.proj_u)
    assert np.allclose(s.proj_u + s.proj_cs, np.eye(2))
    assert np.allclose(s.proj_u @ np.array([0.0, 1.0]), 0.0)


@pytest.mark.parametrize("sys", [solenoid(), fat_cat()], ids=lambda s: s.name)
def test_adapted_norm_expands_and_contracts(sys):
    x = attractor_sample(sys, 1, 40, seed=2)[0]
    lam = sys.metadata["chart_lambda"]
    norm = lyapunov_norm(sys, x, lam, N=40)
    assert norm.checks["unstable_bound_ok"]
    assert norm.checks["stable_bound_ok"]
    assert norm.checks["comparison_ok"]
    assert np.all(np.linalg.eigvalsh(norm.gram) > 0)


def test_hoelder_linear_field_is_constant():
    r = holder_exponent_estimate(fat_cat(), which="s", n_pairs=40)
    assert r["beta_empirical"] == float("inf")
    assert r["pass"]


def test_hoelder_warped_stable_field_meets_prediction():
    r = holder_exponent_estimate(warped_solenoid(), which="u", n_pairs=200)
    assert np.isfinite(r["beta_star"]) and r["beta_star"] > 0
    assert r["beta_empirical"] >= r["beta_star"] - 0.05
