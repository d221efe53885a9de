import numpy as np
import pytest

from mcflab import estimates as E
from mcflab import flow as F
from mcflab.errors import HypothesisViolated, RadiusTooLarge, Unsupported
from mcflab.geometry import GraphData, compute_geometry, geometry_from_derivatives
from mcflab.immersion import PolynomialMap, circle, ellipse, graph_immersion, sphere


def test_identity_checks_on_sphere():
    recs = {r.check_id: r for r in E.identity_checks(compute_geometry(sphere(1.0, 65)))}
    assert all(r.passed for r in recs.values())
    # m = 2, n = 1: (tr A)^2 <= n |A|^2 fails on the round sphere, which is why it is informational
    info = recs["trace_cauchy_schwarz_codim"]
    assert info.status == "informational" and not info.details["holds"]
    assert recs["trace_cauchy_schwarz"].worst_margin == pytest.approx(0.0, abs=1e-12)


def test_minimal_point_has_zero_A():
    psi = PolynomialMap.from_terms(2, [{(2, 0): 0.5, (0, 2): -0.5}])
    gd = GraphData.from_points(psi, [[0.0, 0.0], [0.3, 0.1]], 1.0)
    geom = geometry_from_derivatives(gd.derivatives(), 1)
    assert geom.norm_H_sq[0] == 0.0 and geom.norm_A_sq[0] == 0.0
    recs = {r.check_id: r for r in E.identity_checks(geom)}
    assert recs["A_zero_iff_H_zero"].passed and recs["trace_identity"].passed


def test_hessian_bound_equality_in_m_n_1():
    psi = PolynomialMap.from_terms(1, [{(2,): 0.5}])
    rec = E.hessian_bound_check(GraphData.from_polynomial(psi, 1.0, 201))
    assert rec.details["max_abs_margin"] <= 1e-10
    rng = np.random.default_rng(11)
    for _ in range(5):
        psi = PolynomialMap.random(1, 1, 3, rng)
        rec = E.hessian_bound_check(GraphData.from_polynomial(psi, 1.0, 201))
        scale = max(1.0, float(GraphData.from_polynomial(psi, 1.0, 201).hess_sq.max()))
        assert rec.details["max_abs_margin"] <= 1e-10 * scale


def test_hessian_bound_is_strict_in_higher_codimension():
    psi = PolynomialMap.random(2, 2, 3, np.random.default_rng(5))
    rec = E.hessian_bound_check(GraphData.from_polynomial(psi, 1.0, 32))
    assert rec.passed and rec.details["max_margin"] > 0


def test_eigen_bound_and_suite():
    rec = E.random_graph_suite(E.eigen_bound_check, 2, 3, 2, 5, samples=24)
    assert rec.passed
    assert rec.details["seeds"] == 5 and rec.details["failures"] == 0
    psi = PolynomialMap.from_terms(2, [{(1, 0): 2.0}])
    gd = GraphData.from_polynomial(psi, 1.0, 8)
    lam = np.linalg.eigvalsh(gd.g_tan)
    np.testing.assert_allclose(lam, [[1.0, 5.0]] * len(lam))
    assert E.eigen_bound_check(gd).worst_margin == pytest.approx(0.0, abs=1e-12)


def test_graph_radius_on_circle():
    patch, rec = E.graph_radius_check(circle(1.0, 512), 0, alpha=1.0)
    assert patch.radius == pytest.approx(1 / 2 ** 1.5, rel=1e-4)
    assert rec.passed and patch.is_graph
    assert patch.grad_at_anchor == pytest.approx(0.0, abs=1e-12)
    # the tangent graph over the x axis reaches slope 1 at |x| = 1/sqrt(2)
    assert rec.details["failure_radius"] == pytest.approx(1 / np.sqrt(2), rel=1e-2)
    with pytest.raises(ValueError):
        E.graph_radius_check(circle(1.0, 64), 0, alpha=1.5)


def test_graph_radius_on_sphere_and_ellipse():
    _, rec = E.graph_radius_check(sphere(1.0, 129), 64, alpha=1.0)
    assert rec.details["r_star"] == pytest.approx(0.25, rel=1e-3)
    assert rec.passed
    worst = E.graph_radius_sweep(ellipse(2.0, 1.0, 256), anchors=16, alpha=0.5)
    assert worst.passed and worst.details["failures"] == 0


@pytest.mark.parametrize("r", [1.0, 0.01])
def test_injectivity_on_circles(r):
    rec = E.injectivity_bound_check(circle(r, 256))
    assert rec.details["inj"] == pytest.approx(np.pi * r, rel=1e-4)
    # the bound uses the discrete sup|II|, off by h^2 / 3 at 256 samples
    assert rec.details["bound"] == pytest.approx(r / (2 * np.sqrt(2)), rel=1e-3)
    assert rec.passed


def test_injectivity_unsupported_on_graphs():
    imm = graph_immersion(PolynomialMap.from_terms(2, [{(2, 0): 1.0}]), 1.0, 9)
    with pytest.raises(Unsupported):
        E.injectivity_bound_check(imm)


def test_relative_eigenvalues():
    g0 = np.array([[[2.0, 0.0], [0.0, 1.0]]])
    g1 = np.array([[[2.0, 0.0], [0.0, 3.0]]])
    np.testing.assert_allclose(E.relative_eigenvalues(g0, g1), [[1.0, 3.0]])


def test_ball_inclusion_and_hypothesis():
    imm = circle(1.0, 128)
    g0 = compute_geometry(imm).g
    g1 = 1.1 * g0
    rec = E.ball_inclusion_check(imm, g0, g1, 0.1, 0, 1.0)
    assert rec.passed and rec.details["inner_count"] > 0
    with pytest.raises(HypothesisViolated):
        E.ball_inclusion_check(imm, g0, g1, 0.05, 0, 1.0)


def test_ball_inclusion_suite_on_flow():
    traj = F.run(F.FlowConfig("c", circle(1.0, 128), stop_factor=20.0, snapshot_stride=200))
    worst, recs = E.ball_inclusion_suite(traj, pairs=5)
    assert len(recs) == 5 and worst.passed
    assert E.metric_equivalence_check(traj).passed


def test_metric_path_equality_case():
    """g(t) = (1 + sqrt(T - t)) g0 in m = 2 attains the p = 2 bound with C' = sqrt(2)/4."""
    T, t0, t1 = 1.0, 0.0, 0.75
    g0 = np.eye(2)[None]
    ga = (1 + np.sqrt(T - t0)) * g0
    gb = (1 + np.sqrt(T - t1)) * g0
    rec = E.metric_path_estimate(g0, ga, gb, 2.0, np.sqrt(2) / 4, T, t0, t1)
    assert rec.details["lhs"] == pytest.approx(rec.details["bound"], rel=1e-14)
    assert abs(rec.worst_margin) <= 1e-10 and rec.passed
    assert E.integrated_estimate_bound(2.0, 1.0, 1.0, 0.0, 1.0) == pytest.approx(4.0)


def test_volume_growth_on_sphere():
    imm = sphere(1.0, 129)
    rec = E.volume_growth_check(imm, 64, (0.1, 0.2, 0.3))
    assert rec.passed
    np.testing.assert_allclose(rec.details["ratios"], rec.details["expansion"], rtol=0.01)
    with pytest.raises(RadiusTooLarge):
        E.volume_growth_check(imm, 64, (2.0,))


def test_volume_growth_on_curve_is_exact():
    rec = E.volume_growth_check(circle(1.0, 256), 0, (0.1, 0.5))
    np.testing.assert_allclose(rec.details["ratios"], 1.0, rtol=1e-14)
