import numpy as np
import pytest

from mcflab.immersion import (DumbbellProfile, Kind, PolynomialMap, SampledImmersion, circle,
                              dumbbell, ellipse, graph_immersion, space_curve, sphere)


def test_circle_samples_lie_on_circle():
    imm = circle(2.5, 64)
    assert imm.kind is Kind.CLOSED_CURVE and imm.grid_shape == (64,)
    np.testing.assert_allclose(np.linalg.norm(imm.positions, axis=1), 2.5, rtol=1e-15)
    assert imm.spacing[0] == pytest.approx(2 * np.pi / 64)
    np.testing.assert_array_equal(imm.labels, imm.params[0])


def test_circle_arclength_parametrization():
    imm = circle(2.0, 32, arclength=True)
    assert imm.spacing[0] == pytest.approx(4 * np.pi / 32)
    assert imm.meta["period"] == pytest.approx(4 * np.pi)


def test_ellipse_and_space_curves():
    e = ellipse(2.0, 1.0, 128)
    x, y = e.positions.T
    np.testing.assert_allclose((x / 2) ** 2 + y ** 2, 1.0, rtol=1e-14)
    for preset in ("trefoil", "viviani", "tilted_circle"):
        c = space_curve(preset, 64)
        assert c.n == 2 and c.coord_dim == 3
    with pytest.raises(ValueError):
        space_curve("figure_eight")


def test_sphere_profile_endpoints_on_axis():
    imm = sphere(1.0, 33)
    assert imm.positions[0, 0] == 0.0 and imm.positions[-1, 0] == 0.0
    np.testing.assert_allclose(np.hypot(*imm.positions.T), 1.0, rtol=1e-15)
    amb = imm.ambient_positions(np.pi / 2)
    np.testing.assert_allclose(amb[:, 0], 0.0, atol=1e-16)


def test_profile_validation():
    u = np.linspace(0, np.pi, 9)
    pos = np.stack([np.sin(u) + 0.1, np.cos(u)], -1)
    with pytest.raises(ValueError, match="axis"):
        SampledImmersion(Kind.ROTATIONAL_PROFILE, 2, 1, (u,), pos, (u[1] - u[0],))
    t = np.linspace(0, 1, 4)
    with pytest.raises(ValueError, match="at least 8"):
        SampledImmersion(Kind.CLOSED_CURVE, 1, 1, (t,), np.zeros((4, 2)), (0.25,))
    with pytest.raises(ValueError, match="position components"):
        SampledImmersion(Kind.CLOSED_CURVE, 1, 1, (np.arange(8.0),), np.zeros((8, 3)), (1.0,))


def test_dumbbell_profile_shape():
    prof = DumbbellProfile(1.0, 0.2, 1.0)
    imm = dumbbell(samples=401)
    rho, z = imm.positions.T
    assert rho[0] == 0.0 and rho[-1] == 0.0
    # mirror symmetric about the neck centre, neck radius attained there
    np.testing.assert_allclose(rho, rho[::-1], atol=1e-12)
    mid = len(rho) // 2
    assert rho[mid] == pytest.approx(0.2, rel=1e-9)
    assert rho.max() == pytest.approx(1.0, rel=1e-3)
    assert z[mid] == pytest.approx(0.0, abs=1e-12)
    assert abs(z[np.argmax(rho)]) == pytest.approx(prof.center, abs=1e-2)
    # meridian speed bounded away from zero (regular parametrization)
    speed = np.linalg.norm(np.diff(imm.positions, axis=0), axis=1)
    assert speed.min() > 0.2 * speed.mean()


def test_polynomial_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    psi = PolynomialMap.random(2, 3, 3, rng)
    x = rng.uniform(-0.5, 0.5, (5, 2))
    h = 1e-6
    J = psi.jacobian(x)
    Hs = psi.hessian(x)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (psi.value(x + e) - psi.value(x - e)) / (2 * h)
        np.testing.assert_allclose(J[:, :, i], fd, rtol=1e-6, atol=1e-8)
        fdJ = (psi.jacobian(x + e) - psi.jacobian(x - e)) / (2 * h)
        np.testing.assert_allclose(Hs[:, :, :, i], fdJ, rtol=1e-6, atol=1e-8)
    np.testing.assert_array_equal(Hs, np.swapaxes(Hs, -1, -2))


def test_polynomial_from_terms_and_graph():
    psi = PolynomialMap.from_terms(2, [{(2, 0): 0.5, (0, 2): 0.5}])
    assert psi.value(np.array([[1.0, 2.0]]))[0, 0] == pytest.approx(2.5)
    imm = graph_immersion(psi, 1.0, 17)
    assert imm.kind is Kind.DISC_GRAPH and imm.grid_shape == (17, 17)
    assert imm.disc_mask().sum() < 17 * 17
    np.testing.assert_allclose(imm.positions[8, 8], [0.0, 0.0, 0.0], atol=1e-15)
