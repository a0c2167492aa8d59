import numpy as np
import pytest

from srbkit import graph_transform as gt
from srbkit.errors import ConditionsViolated
from srbkit.systems import attractor_sample, fat_cat, inverse_on_attractor, linear, solenoid


def _linear_charts(n=6):
    sys = linear([[2.0, 0.0], [0.0, 0.5]])
    ext = (np.zeros((0, 2)), np.zeros((0, 2)))
    return gt.build_charts(sys, np.zeros((n + 1, 2)), lam1=np.log(2.0), delta2=0.0,
                           metric="euclidean", extension=ext)


def test_linear_model_contracts_at_closed_form_rates():
    # for x ↦ (2x, y/2) a graph v maps to v′(η) = v(η/2)/2, so offsets shrink
    # by e^{−λ} and slopes by e^{−2λ} with λ = log 2
    ch = _linear_charts()
    r = ch.radii[0]
    a = gt.affine_patch(ch, 0, 0.3 * r, 0.04)
    b = gt.affine_patch(ch, 0, -0.1 * r, -0.02)
    d0, d1 = gt.c0_distance(a, b), gt.c1_distance(a, b)
    for i in range(4):
        a = gt.graph_transform_step(ch, i, a)
        b = gt.graph_transform_step(ch, i, b)
        assert gt.c1_distance(a, b) == pytest.approx(d1 * 0.25 ** (i + 1), rel=1e-9)
        # slopes shrink too, so the sup over the box decays at least at e^{−λ}
        assert gt.c0_distance(a, b) <= d0 * 0.5 ** (i + 1) * (1 + 1e-9)
    a = gt.affine_patch(ch, 0, 0.3 * r)
    b = gt.affine_patch(ch, 0, -0.1 * r)
    a1, b1 = (gt.graph_transform_step(ch, 0, v) for v in (a, b))
    assert gt.c0_distance(a1, b1) == pytest.approx(0.5 * gt.c0_distance(a, b), rel=1e-12)


def test_convergence_fit_recovers_linear_rates():
    ch = _linear_charts(8)
    r = ch.radii[0]
    d = gt.convergence_diagnostics(ch, gt.affine_patch(ch, 0, 0.2 * r, 0.05),
                                   gt.affine_patch(ch, 0, -0.2 * r, -0.05), 8)
    assert d["c1_exponent"] == pytest.approx(2 * np.log(2.0), rel=1e-6)
    assert d["pass"]


def test_solenoid_adapted_charts_pass_and_euclidean_fail_condition_one():
    sys = solenoid()
    x = attractor_sample(sys, 1, 40, seed=0)[0]
    bwd = inverse_on_attractor(sys, x, 12)
    ch = gt.build_charts(sys, bwd, lam1=0.6)
    assert ch.report["pass"]
    # one-step Euclidean expansion along Eᵘ dips below e^{0.6}
    eu = gt.build_charts(sys, bwd, lam1=0.6, metric="euclidean", strict=False)
    assert not eu.report["pass"]
    assert eu.report["failed_condition"] == "I"
    with pytest.raises(ConditionsViolated):
        gt.build_charts(sys, bwd, lam1=0.6, metric="euclidean")


def test_unstable_manifold_is_tangent_and_backward_contracting():
    sys = solenoid()
    x = attractor_sample(sys, 1, 40, seed=1)[0]
    p = gt.unstable_manifold(sys, x, depth=25)
    assert np.linalg.norm(p(np.zeros((1, 1)))) < 1e-8
    assert np.linalg.norm(p.deriv(np.zeros((1, 1)))) < 1e-6
    Y = p.evaluator.embed(np.linspace(-p.radius, p.radius, 7)[:, None])
    back_x = inverse_on_attractor(sys, x, 8).points
    d_prev = sys.distance(Y, x)
    for k in range(1, 9):
        Y = sys.known_inverse(Y)
        d = sys.distance(Y, back_x[k])
        # backward iterates approach the backward orbit of x
        assert np.all(d[d_prev > 1e-9] < d_prev[d_prev > 1e-9])
        d_prev = d


def test_solenoid_stable_manifold_is_the_fiber():
    sys = solenoid()
    x = attractor_sample(sys, 1, 40, seed=2)[0]
    p = gt.stable_manifold(sys, x, depth=20)
    assert np.max(np.abs(p.flat_values())) < 1e-10
    Y = p.evaluator.embed(p.nodes)
    assert np.allclose(sys.displacement(x, Y)[:, 0], 0.0, atol=1e-10)


def test_fat_cat_stable_contraction():
    sys = fat_cat()
    x = attractor_sample(sys, 1, 20, seed=3)[0]
    p = gt.stable_manifold(sys, x, depth=15)
    ch = p.evaluator.charts
    assert gt.stable_contraction_check(ch, p) <= np.exp(-ch.lam1) * (1 + 1e-9)


def test_linear_tail_determines_stable_graph():
    sys = solenoid()
    x = attractor_sample(sys, 1, 40, seed=4)[0]
    fwd = np.empty((26, 3))
    fwd[0] = x
    for k in range(25):
        fwd[k + 1] = sys.map_eval(fwd[k])
    ch = gt.build_charts(sys, fwd, lam1=0.6)
    res = gt.finite_determination_check(ch, None, N_values=(3, 6, 9))
    assert res["pass"]


def test_random_patch_is_in_class():
    ch = _linear_charts()
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert gt.random_patch(ch, 0, rng).class_report()["in_class"]
