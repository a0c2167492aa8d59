import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from srbkit import symbolic as sym
from srbkit.errors import InadmissibleWord, SmallnessChainViolated
from srbkit.systems import attractor_sample, fat_cat, solenoid


@pytest.mark.parametrize("n", range(1, 8))
def test_cat_periodic_count_formula_matches_lattice_enumeration(n):
    # |det(Aⁿ − I)| by integer arithmetic, independent of the trace formula
    An = np.linalg.matrix_power(np.array([[2, 1], [1, 1]], dtype=object), n)
    det = abs((An[0, 0] - 1) * (An[1, 1] - 1) - An[0, 1] * An[1, 0])
    assert sym.cat_periodic_count(n) == det
    assert len(sym.cat_periodic_points(n)) == det


def test_cat_periodic_points_are_periodic():
    sys = fat_cat()
    P = sym.cat_periodic_points(4)
    Q = P.copy()
    for _ in range(4):
        Q = sys.map_eval(Q)
    assert np.max(sys.distance(P, Q)) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_closing_finds_every_cat_periodic_point(n):
    sys = fat_cat()
    rng = np.random.default_rng(n)
    seeds = np.column_stack([rng.random((20000, 2)), np.zeros(20000)])
    found = sym.periodic_points_by_closing(sys, n, seeds)
    assert len(found) == sym.cat_periodic_count(n)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_closing_counts_for_the_solenoid(n):
    # θ ↦ 2ⁿθ has 2ⁿ − 1 fixed points; each carries one periodic fiber point
    sys = solenoid()
    seeds = attractor_sample(sys, 20000, 30, seed=n)
    assert len(sym.periodic_points_by_closing(sys, n, seeds)) == 2 ** n - 1


def test_close_periodic_returns_nearby_periodic_point():
    sys = fat_cat()
    P = sym.cat_periodic_points(3)
    x = sys.wrap(P[5] + np.array([1e-5, -1e-5, 0.0]))
    y = sym.close_periodic(sys, x, 3, eps=1e-3)
    assert sys.distance(y, P[5]) < 1e-10


@pytest.mark.parametrize("sys", [fat_cat(), solenoid()], ids=lambda s: s.name)
def test_shadowing_a_noisy_orbit(sys):
    rng = np.random.default_rng(0)
    x = attractor_sample(sys, 1, 60, seed=1)[0]
    orb = [x]
    for _ in range(199):
        noise = rng.normal(size=3)
        if sys.name == "fat-cat":
            noise[2] = 0.0
        orb.append(sys.wrap(sys.map_eval(orb[-1]) + 5e-5 * noise / np.linalg.norm(noise)))
    po = sym.PseudoOrbit(np.array(orb), 1e-4)
    res = sym.shadow(sys, po, 1e-3)
    assert res.beta <= 1e-3
    img = sys.map_eval(res.points[:-1])
    assert np.max(sys.distance(img, res.points[1:])) < 1e-9


def test_pseudo_orbit_rejects_understated_defect():
    sys = fat_cat()
    P = np.array([[0.1, 0.2, 0.0], [0.5, 0.5, 0.0]])
    with pytest.raises(ValueError):
        sym.PseudoOrbit(P, 1e-6).measure(sys)


def test_spectral_decomposition_examples():
    full = sym.spectral_decomposition(np.ones((2, 2)))
    assert full["components"][0]["period"] == 1 and not full["wandering"]
    cyc = sym.spectral_decomposition(np.roll(np.eye(3), 1, axis=1))
    assert cyc["components"][0]["period"] == 3
    assert sorted(map(len, cyc["components"][0]["cyclic_classes"])) == [1, 1, 1]
    # 0 → 1 ⇄ 2 with 0 transient
    red = sym.spectral_decomposition(np.array([[0, 1, 0], [0, 0, 1], [0, 1, 0]]))
    assert red["wandering"] == [0]
    assert red["components"][0]["period"] == 2


adj = st.integers(2, 7).flatmap(
    lambda m: arrays(np.int8, (m, m), elements=st.integers(0, 1)))


@settings(max_examples=150, deadline=None)
@given(adj)
def test_spectral_decomposition_properties(A):
    dec = sym.spectral_decomposition(A)
    seen = sorted(dec["wandering"] + [s for c in dec["components"] for s in c["states"]])
    assert seen == list(range(A.shape[0]))
    for c in dec["components"]:
        p = c["period"]
        cls = {s: r for r, states in enumerate(c["cyclic_classes"]) for s in states}
        # every internal edge advances the cyclic class by one
        for u, v in itertools.product(c["states"], repeat=2):
            if A[u, v]:
                assert cls[v] == (cls[u] + 1) % p
        # the period divides the length of every closed walk through a state
        s = c["states"][0]
        sub = A[np.ix_(c["states"], c["states"])].astype(np.int64)
        M = np.eye(len(c["states"]), dtype=np.int64)
        for k in range(1, 2 * len(c["states"]) + 1):
            M = np.minimum(M @ sub, 1)
            if M[0, 0]:
                assert k % p == 0


def test_cat_segment_partition_is_markov():
    sys = fat_cat()
    part = sym.cat_segment_partition()
    rep = sym.verify_markov(sys, part, n_samples=2000)
    assert rep["violations"] == 0
    T = sym.transition_matrix_exact(part)
    assert T.irreducible and T.aperiodic
    assert np.log(T.spectral_radius) == pytest.approx(np.log((3 + np.sqrt(5)) / 2), abs=1e-12)


def test_solenoid_cylinders_are_markov_with_entropy_log2():
    sys = solenoid()
    part = sym.CylinderPartition(sys, 2, 1)
    assert part.size == 8
    assert sym.verify_markov(sys, part, n_samples=2000)["violations"] == 0
    T = sym.transition_matrix_exact(part)
    assert T.spectral_radius == pytest.approx(2.0, abs=1e-12)


def test_coding_semiconjugacy_and_inadmissible_words():
    sys = fat_cat()
    part = sym.cat_segment_partition()
    A = sym.transition_matrix_exact(part).A
    x = np.array([0.3141, 0.5926, 0.0])
    word = sym.itinerary(sys, part, x, 4)
    assert np.all(word >= 0)
    P, diam, semi = sym.coding_map(sys, part, word, A)
    assert sys.distance(P, x) <= diam + 1e-12
    assert semi < 1e-6
    bad = [i for i in range(part.size) if not A[word[0], i]]
    if bad:
        with pytest.raises(InadmissibleWord):
            sym.coding_map(sys, part, [word[0], bad[0]], A)


def test_itinerary_shifts_under_the_map():
    sys = fat_cat()
    part = sym.cat_segment_partition()
    x = np.array([0.271, 0.828, 0.0])
    a = sym.itinerary(sys, part, x, 5)
    b = sym.itinerary(sys, part, sys.map_eval(x), 5)
    assert np.array_equal(a[1:], b[:-1])


def test_smallness_chain_is_enforced():
    with pytest.raises(SmallnessChainViolated):
        sym.build_markov_partition(fat_cat(), gamma=0.02, alpha=0.02, beta=0.1)
