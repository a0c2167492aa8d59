import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from srbkit import thermo as th
from srbkit.errors import ReducibleChain
from srbkit.systems import attractor_sample, fat_cat, solenoid

GOLDEN_MEAN = [[1, 1], [1, 0]]


def _two_block_oracle(A, phi):
    """Spectral radius of M_ij = A_ij·exp φ(ij) by dense eigenvalues."""
    A = np.asarray(A)
    M = np.zeros(A.shape)
    for (i, j), v in zip(phi.blocks.tolist(), phi.values):
        M[i, j] = np.exp(v)
    return float(np.log(np.max(np.abs(np.linalg.eigvals(M)))))


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("c", [0.0, -0.7, 1.3])
def test_full_shift_constant_potential(n, c):
    sft = th.SFT(np.ones((n, n)))
    assert th.pressure_gibbs(sft, th.Potential.constant(sft, c)).pressure == \
        pytest.approx(np.log(n) + c, abs=1e-12)


def test_bernoulli_pressure_and_measure():
    sft = th.SFT(np.ones((3, 3)))
    v = np.array([0.2, -1.0, 0.5])
    g = th.pressure_gibbs(sft, th.Potential(1, [[0], [1], [2]], v))
    assert g.pressure == pytest.approx(np.log(np.exp(v).sum()), abs=1e-12)
    p = np.exp(v) / np.exp(v).sum()
    words = np.array([[0, 2, 1], [1, 1, 0]])
    assert np.allclose(g.cylinder_mass(words), [p[0] * p[2] * p[1], p[1] * p[1] * p[0]],
                       rtol=1e-10)


def test_pressure_matches_partition_function_growth():
    # log Z_{n+1} − log Z_n → P, an independent route through word sums
    sft = th.SFT(GOLDEN_MEAN)
    rng = np.random.default_rng(1)
    phi = th.Potential.random(sft, 2, rng)
    logZ = []
    for n in (21, 22):
        W = sft.blocks(n)
        logZ.append(np.log(np.sum(np.exp(phi.birkhoff(W)))))
    assert th.pressure_gibbs(sft, phi).pressure == pytest.approx(logZ[1] - logZ[0], abs=1e-6)


def test_sft_counts_match_enumeration():
    sft = th.SFT([[1, 1, 0], [0, 1, 1], [1, 0, 1]])
    for m in range(0, 8):
        assert sft.count(m) == sft.blocks(m).shape[0]


pot_values = arrays(np.float64, 3, elements=st.floats(-2, 2, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(pot_values, pot_values, st.floats(-3, 3))
def test_pressure_properties(v, w, c):
    sft = th.SFT(GOLDEN_MEAN)
    B = sft.blocks(2)
    phi = th.Potential(2, B, v)
    P = th.pressure_gibbs(sft, phi).pressure
    assert P == pytest.approx(_two_block_oracle(GOLDEN_MEAN, phi), abs=1e-9)
    # P(φ + c) = P(φ) + c
    assert th.pressure_gibbs(sft, phi.shifted(c)).pressure == pytest.approx(P + c, abs=1e-9)
    # monotone
    hi = th.Potential(2, B, np.maximum(v, w))
    assert th.pressure_gibbs(sft, hi).pressure >= P - 1e-10
    # cohomologous potentials φ + u(x₁) − u(x₀) share the pressure
    u = w[:2]
    cob = th.Potential(2, B, v + u[B[:, 1]] - u[B[:, 0]])
    assert th.pressure_gibbs(sft, cob).pressure == pytest.approx(P, abs=1e-9)


def test_gibbs_measure_is_consistent_and_banded():
    sft = th.SFT(GOLDEN_MEAN)
    phi = th.Potential.random(sft, 3, np.random.default_rng(2))
    g = th.pressure_gibbs(sft, phi)
    assert g.consistency_error() < 1e-12
    band = th.gibbs_bounds_check(g, sft, phi, 12)
    assert band["bounded"] and band["drift_free"]
    assert 0 < band["c1"] <= 1 <= band["c2"]


def test_variational_principle():
    sft = th.SFT(GOLDEN_MEAN)
    phi = th.Potential.random(sft, 3, np.random.default_rng(3))
    g = th.pressure_gibbs(sft, phi)
    v = th.entropy_and_variational(g, sft, phi, n_perturb=10)
    assert abs(v["identity_residual"]) < 1e-10
    assert v["inequality_ok"]
    assert all(p["gap"] > 0 for p in v["perturbed"])


def test_golden_mean_entropy_is_log_phi():
    sft = th.SFT(GOLDEN_MEAN)
    g = th.pressure_gibbs(sft, th.Potential.constant(sft))
    assert g.entropy == pytest.approx(np.log((1 + np.sqrt(5)) / 2), abs=1e-12)


def test_reducible_chain_reports_component_pressures():
    A = [[1, 1, 0], [0, 1, 1], [0, 1, 1]]
    sft = th.SFT(A)
    with pytest.raises(ReducibleChain) as err:
        th.pressure_gibbs(sft, th.Potential.constant(sft))
    comps = err.value.details["components"]
    assert sorted(round(c["pressure"], 12) for c in comps) == [0.0, round(np.log(2), 12)]


def test_period_two_chain():
    sft = th.SFT([[0, 1], [1, 0]])
    assert not sft.mixing and sft.irreducible
    g = th.pressure_gibbs(sft, th.Potential.constant(sft, 0.3))
    assert g.pressure == pytest.approx(0.3, abs=1e-12)
    assert np.allclose(g.stationary, 0.5)


def test_potential_variation():
    sft = th.SFT(np.ones((2, 2)))
    phi = th.Potential(2, sft.blocks(2), [0.0, 1.0, 3.0, 3.5])
    assert phi.var(0) == 3.5
    assert phi.var(1) == 1.0
    assert phi.var(2) == 0.0


def test_positive_exponent_sum_for_the_solenoid():
    sys = solenoid()
    X = attractor_sample(sys, 64, 40, seed=0)
    val = th.positive_exponent_sum(sys, X, np.full(64, 1 / 64))
    assert val == pytest.approx(np.log(2), abs=0.01)


def test_log_unstable_jacobians_fat_cat():
    sys = fat_cat()
    X = np.column_stack([np.random.default_rng(0).random((10, 2)), np.zeros(10)])
    assert np.allclose(th.log_unstable_jacobians(sys, X), np.log((3 + np.sqrt(5)) / 2))
