import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflab.errors import DegenerateMetric
from mcflab.estimates import identity_checks
from mcflab.geometry import (GraphData, compute_geometry, geometry_from_derivatives,
                             induced_metric, normal_frame, total_volume)
from mcflab.immersion import PolynomialMap, circle, ellipse, graph_immersion, space_curve, sphere


@pytest.mark.parametrize("r", [0.01, 1.0, 3.0])
def test_circle_curvature(r):
    imm = circle(r, 1024)
    geom = compute_geometry(imm)
    # second-order differences: relative error h^2 / 3 with h = 2 pi / 1024
    np.testing.assert_allclose(geom.norm_II_sq, 1 / r ** 2, rtol=3e-5)
    np.testing.assert_allclose(geom.norm_H_sq, geom.norm_II_sq, rtol=1e-12)
    np.testing.assert_allclose(geom.norm_A_sq, geom.norm_H_sq ** 2, rtol=1e-12)
    np.testing.assert_allclose(geom.scalar_R, 0.0, atol=1e-12 / r ** 2)
    # mean curvature vector points to the centre
    Hv = geom.H_vector()
    assert np.all(np.einsum("si,si->s", Hv, imm.positions) < 0)
    assert total_volume(imm, geom) == pytest.approx(2 * np.pi * r, rel=3e-5)


def test_sphere_curvature_away_from_poles():
    geom = compute_geometry(sphere(1.0, 257))
    m = geom.norm_mask
    np.testing.assert_allclose(geom.norm_II_sq[m], 2.0, rtol=1e-3)
    np.testing.assert_allclose(geom.norm_H_sq[m], 4.0, rtol=1e-3)
    np.testing.assert_allclose(geom.scalar_R[m], 2.0, rtol=2e-3)
    np.testing.assert_allclose(np.sqrt(geom.norm_H_sq[m] / geom.norm_II_sq[m]), np.sqrt(2),
                               rtol=1e-4)
    assert not m[0] and not m[-1]


def test_sphere_area():
    imm = sphere(2.0, 257)
    assert total_volume(imm, compute_geometry(imm)) == pytest.approx(16 * np.pi, rel=1e-4)


def test_ellipse_curvature_extremes():
    geom = compute_geometry(ellipse(2.0, 1.0, 2048))
    k = np.sqrt(geom.norm_II_sq)
    assert k.max() == pytest.approx(2.0, rel=1e-5)   # a / b^2
    assert k.min() == pytest.approx(0.25, rel=1e-5)  # b / a^2


def test_space_curve_frame_is_orthonormal():
    imm = space_curve("trefoil", 256)
    geom = compute_geometry(imm)
    nu = geom.normal_frame
    gram = np.einsum("sad,sbd->sab", nu, nu)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-12)
    T = np.roll(imm.positions, -1, axis=0) - np.roll(imm.positions, 1, axis=0)
    np.testing.assert_allclose(np.einsum("sad,sd->sa", nu, T), 0.0, atol=1e-10)
    assert all(r.passed for r in identity_checks(geom))


def test_tilted_circle_in_r3_matches_planar_circle():
    geom = compute_geometry(space_curve("tilted_circle", 512))
    flat = compute_geometry(circle(1.0, 512))
    assert geom.n == 2 and geom.m == 1
    np.testing.assert_allclose(geom.norm_II_sq, flat.norm_II_sq, rtol=1e-10)


def test_degenerate_metric_raises():
    imm = circle(1.0, 16)
    pos = imm.positions.copy()
    pos[3] = pos[4] = pos[5]
    with pytest.raises(DegenerateMetric):
        compute_geometry(imm.with_positions(pos))
    with pytest.raises(DegenerateMetric):
        induced_metric(np.zeros((3, 1, 2)))


def test_normal_frame_complements_tangent():
    Fi = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]])
    nu = normal_frame(Fi, 1)
    expected = np.array([0.0, -1.0, 1.0]) / np.sqrt(2)
    assert abs(nu[0, 0] @ expected) == pytest.approx(1.0, rel=1e-15)


def test_graph_paraboloid_at_origin():
    psi = PolynomialMap.from_terms(2, [{(2, 0): 0.5, (0, 2): 0.5}])
    gd = GraphData.from_points(psi, [[0.0, 0.0]], 1.0)
    assert gd.norm_II_sq()[0] == pytest.approx(2.0)
    geom = geometry_from_derivatives(gd.derivatives(), 1)
    assert geom.norm_H_sq[0] == pytest.approx(4.0)
    # the sampled graph agrees with the exact contraction at the centre sample
    g2 = compute_geometry(graph_immersion(psi, 1.0, 65))
    assert g2.norm_II_sq[32, 32] == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 3))
def test_identities_hold_on_random_graphs(seed, n):
    psi = PolynomialMap.random(2, n, 3, np.random.default_rng(seed))
    gd = GraphData.from_polynomial(psi, 1.0, 16)
    geom = geometry_from_derivatives(gd.derivatives(), n)
    for rec in identity_checks(geom):
        if rec.status != "informational":
            assert rec.passed, rec
    np.testing.assert_allclose(geom.norm_II_sq, gd.norm_II_sq(), rtol=1e-9)
