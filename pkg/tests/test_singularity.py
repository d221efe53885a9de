import numpy as np
import pytest

from mcflab import flow as F
from mcflab import singularity as S
from mcflab.errors import FitDiverged, InsufficientData
from mcflab.geometry import compute_geometry
from mcflab.immersion import circle, sphere


def _series(T=1.0, p=2.0, C=1.0, n=400):
    """q = (C / (T - t))^(1/p) sampled geometrically in T - t down to 1e-4 T."""
    t = T - T * np.logspace(0.0, -4.0, n)
    return t, (C / (T - t)) ** (1.0 / p)


@pytest.mark.parametrize("p", [2.0, 1.5, 3.0])
def test_fit_recovers_power_law(p):
    t, q = _series(p=p)
    fit = S.fit_blowup(t, q)
    assert fit.T_est == pytest.approx(1.0, rel=1e-6)
    assert fit.p_est == pytest.approx(p, rel=1e-5)
    assert fit.C_est == pytest.approx(1.0, rel=1e-4)
    assert fit.fit_window[0] < fit.fit_window[1] < fit.T_est
    assert fit.residual_rms < 1e-6


def test_fit_errors():
    t, q = _series(n=15)
    with pytest.raises(InsufficientData):
        S.fit_blowup(t, q)
    t = np.linspace(0, 1, 400)
    q = np.exp(np.random.default_rng(0).normal(0, 1.0, 400)) * np.where(t > 0.5, 100.0, 1.0)
    with pytest.raises((FitDiverged, InsufficientData)):
        S.fit_blowup(t, q)


def test_classification_thresholds():
    def cls(p):
        return S.classify_type(S.BlowupFit(S.Quantity.II, 1.0, p, 1.0, (0, 1), 0, -1 / p, 30))
    assert cls(2.0).kind is S.BlowupType.TYPE_I
    assert cls(2.15).kind is S.BlowupType.TYPE_I
    assert cls(2.2).kind is S.BlowupType.SUPER_TYPE_I
    assert cls(1.6).kind is S.BlowupType.GENERALIZED_RATE
    assert str(cls(1.6)) == "GeneralizedRate(1.6)"
    assert cls(0.9).kind is S.BlowupType.UNCLASSIFIED


def test_decade_growth_exact_for_power_law():
    t, q = _series(p=1.0, n=300)
    assert S.decade_growth(t, q, 1.0) == pytest.approx(10.0, rel=1e-12)
    t, q = _series(p=2.0, n=300)
    assert S.decade_growth(t, q, 1.0) == pytest.approx(np.sqrt(10.0), rel=1e-12)
    assert np.isnan(S.decade_growth(np.array([0.5, 0.9]), np.array([1.0, 2.0]), 1.0))


def test_rescale_immersion_scaling_laws():
    imm = sphere(0.5, 65)
    geom = compute_geometry(imm)
    p = geom.argmax()
    Q = float(np.sqrt(geom.norm_II_sq[p]))
    r = S.rescale_immersion(imm, Q, p)
    rgeom = compute_geometry(r)
    assert np.sqrt(rgeom.norm_II_sq[p]) == pytest.approx(1.0, abs=1e-12)
    assert r.positions[p, 1] == 0.0 and r.positions[0, 0] == 0.0
    res = S.scaling_residuals(imm, geom, r, rgeom, Q)
    assert max(res.values()) < 1e-10


@pytest.fixture(scope="module")
def small_circle():
    return F.run(F.FlowConfig("c", circle(1.0, 128), stop_factor=100.0, snapshot_stride=10 ** 6))


def test_circle_fit_and_monitor(small_circle):
    fit = S.estimate_singular_time(small_circle)
    assert fit.T_est == pytest.approx(0.5, rel=1e-3)
    assert S.classify_type(fit).kind is S.BlowupType.TYPE_I
    mon = S.blowup_monitor(small_circle)
    assert all(e.verdict is S.Verdict.BLOWUP for e in mon.values())
    assert mon["A"].exponent == pytest.approx(2 * mon["II"].exponent, rel=1e-6)


def test_parabolic_rescale_levels(small_circle):
    entries = S.parabolic_rescale(small_circle, levels=6)
    assert [e.j for e in entries] == [1, 2, 3, 4, 5, 6]
    for e in entries:
        assert e.normalization_residual < 1e-12
        assert e.history_max <= 1 + 1e-6
        assert max(e.scaling_residuals.values()) < 1e-10
        t, q = S.rescaled_history(small_circle, e)
        assert t[-1] == 0.0 and q[-1] == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(InsufficientData):
        S.parabolic_rescale(small_circle, picks=[12])


def test_displacement_bound(small_circle):
    rec = S.displacement_bound_check(small_circle)
    assert rec.passed and rec.worst_margin > 0


def test_nonsingular_trajectory_has_no_verdict():
    traj = F.run(F.FlowConfig("c", circle(1.0, 64), max_steps=10, snapshot_stride=5))
    with pytest.raises(InsufficientData):
        S.estimate_singular_time(traj)
    mon = S.blowup_monitor(traj)
    assert all(e.verdict is S.Verdict.NO_VERDICT for e in mon.values())
    rep = S.analysis_report(traj)
    assert "error" in rep["fits"]["II"] and "rescale" not in rep


# Values computed by the bundled scenarios (T_est, p_est, fit window length).
FROZEN = {
    "circle": (0.49998870510578336, 1.999999999960119, 99462),
    "sphere": (0.24999622429566135, 2.0000885452850334, 25067),
    "dumbbell": (0.04586519755859653, 2.0716004122768927, 15691),
}


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_bundled_frozen_values(runs, name):
    T, p, n = FROZEN[name]
    fit = S.estimate_singular_time(runs(name))
    assert fit.T_est == pytest.approx(T, rel=1e-9)
    assert fit.p_est == pytest.approx(p, rel=1e-9)
    assert fit.n_points == n
    assert S.classify_type(fit).kind is S.BlowupType.TYPE_I
