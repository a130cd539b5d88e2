import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from canls.experiments import SPEED_OF_LIGHT
from canls.signal_model import (
    SceneTargets,
    TomoGeometry,
    build_steering_matrix,
    correlation_coefficient,
    make_rng,
    rayleigh_resolution,
    reference_geometry,
    steering_vectors,
    synthesize_pixel,
)


def test_rayleigh_reference():
    assert rayleigh_resolution(reference_geometry()) == pytest.approx(26.0, abs=1e-12)


def test_rayleigh_doubled_extent():
    assert reference_geometry(baseline_extent=1806.0).rayleigh_resolution == pytest.approx(13.0)


def test_rayleigh_stack_parameters():
    lam = SPEED_OF_LIGHT / 4.5e9
    geo = TomoGeometry.uniform(24, 100.0, lam, 20e3, 40.0, 50)
    assert geo.rayleigh_resolution == pytest.approx(6.662, abs=1e-3)


def test_degenerate_baselines_rejected():
    geo = TomoGeometry(0.03, 1e6, [5.0, 5.0], 10.0, 10)
    with pytest.raises(ValueError, match="degenerate"):
        rayleigh_resolution(geo)


@pytest.mark.parametrize("kw, field", [
    (dict(baselines=[0.0]), "baselines"),
    (dict(grid_size=1), "grid_size"),
    (dict(elevation_extent=0.0), "elevation_extent"),
    (dict(wavelength=-1.0), "wavelength"),
])
def test_geometry_invariants(kw, field):
    base = dict(wavelength=0.03, range_to_scene=1e6, baselines=[0.0, 10.0],
                elevation_extent=10.0, grid_size=5)
    base.update(kw)
    with pytest.raises(ValueError, match=field):
        TomoGeometry(**base)


def test_grid_spacing(geo):
    d = np.diff(geo.grid)
    assert np.all(d > 0)
    assert np.allclose(d, 360.0 / 233, rtol=0, atol=1e-12)


def test_uniform_flag():
    assert TomoGeometry.uniform(5, 100.0, 0.03, 1e6, 10.0, 5, centered=False).is_uniform
    assert reference_geometry().is_uniform
    assert not TomoGeometry(0.03, 1e6, [0.0, 10.0, 40.0], 10.0, 5).is_uniform


def test_zero_elevation_column_is_ones(A):
    assert np.array_equal(A.entries[:, 0], np.ones(A.n_passes))


def test_steering_entry_against_mpmath():
    geo = TomoGeometry(0.031, 46956.0 / 0.031, [0.0, 451.5], 360.0, 2)
    got = steering_vectors(geo, [13.0])[1, 0]
    mpmath.mp.dps = 40
    ref = mpmath.exp(2j * mpmath.pi * (2 * mpmath.mpf("451.5") / 46956) * 13)
    assert abs(got - complex(ref)) < 1e-12
    assert abs(got - 1j) < 1e-9  # 2*451.5*13/46956 = 1/4


@given(n=st.integers(2, 30), m=st.integers(2, 60), extent=st.floats(1.0, 2000.0),
       db=st.floats(10.0, 3000.0))
def test_steering_unit_modulus_and_norm(n, m, extent, db):
    A = build_steering_matrix(TomoGeometry.uniform(n, db, 0.031, 8e5, extent, m))
    assert np.allclose(np.abs(A.entries), 1.0, atol=1e-12)
    assert np.allclose(np.sum(np.abs(A.entries) ** 2, axis=0), n, atol=1e-12)
    assert np.allclose(np.diag(A.gram).real, n, atol=1e-10)


def test_synthesize_no_targets_no_noise(A, rng):
    m = synthesize_pixel(SceneTargets(), A, rng)
    assert np.array_equal(m.g, np.zeros(A.n_passes))
    assert len(m) == A.n_passes


def test_synthesize_single_noiseless(A, rng):
    s10 = A.grid[10]
    m = synthesize_pixel(SceneTargets([s10], [2.5], [0.0]), A, rng)
    assert np.allclose(m.g, 2.5 * A.entries[:, 10], atol=1e-12)


def test_synthesize_energy_expectation(A):
    rng = make_rng(7)
    trials = 100_000
    n = A.n_passes
    ph = rng.uniform(0, 2 * np.pi, (trials, 2))
    cols = steering_vectors(A.geometry, [100.0, 113.0])
    noise = (rng.standard_normal((trials, n)) + 1j * rng.standard_normal((trials, n))) / np.sqrt(2)
    g = np.exp(1j * ph) @ cols.T + noise
    mean = np.mean(np.sum(np.abs(g) ** 2, axis=1))
    assert mean == pytest.approx(60.0, rel=0.02)


def test_synthesize_noise_covariance(A):
    rng = make_rng(3)
    G = np.array([synthesize_pixel(SceneTargets(noise_sigma=1.0), A, rng).g for _ in range(20000)])
    C = G.T @ G.conj() / G.shape[0]
    off = C - np.diag(np.diag(C))
    assert np.max(np.abs(off)) < 0.03
    assert np.allclose(np.diag(C).real, 1.0, atol=0.05)


def test_synthesize_deterministic(A):
    t = SceneTargets.two_targets(50.0, 0.5, 26.0, 2.0, 0.3)
    a = synthesize_pixel(t, A, make_rng(11)).g
    b = synthesize_pixel(t, A, make_rng(11)).g
    assert np.array_equal(a, b)


def test_two_targets_scenario():
    t = SceneTargets.two_targets(40.0, 0.5, 26.0, 3.0, 0.7)
    assert np.allclose(t.elevations, [40.0, 53.0])
    assert np.allclose(t.amplitudes, 3.0)
    assert t.phases[1] - t.phases[0] == pytest.approx(0.7)


def test_scene_targets_rejects_negative_amplitude():
    with pytest.raises(ValueError):
        SceneTargets([1.0], [-1.0], [0.0])


def _direct_corr(A, m, d):
    n = A.n_passes
    return np.vdot(A.entries[:, m], A.entries[:, m + d]) / n


def test_correlation_zero(geo):
    assert correlation_coefficient(0, geo) == pytest.approx(1.0)


def test_correlation_d5_direct_sum(geo, A):
    assert abs(correlation_coefficient(5, geo) - _direct_corr(A, 17, 5)) < 1e-12


def test_correlation_conjugate_symmetry():
    geo = reference_geometry(centered=False)
    for d in (0.5, 3.0, 7.25):
        assert correlation_coefficient(-d, geo) == pytest.approx(np.conj(correlation_coefficient(d, geo)))


@pytest.mark.parametrize("centered", [True, False])
def test_correlation_matches_matrix(centered):
    geo = reference_geometry(centered=centered)
    A = build_steering_matrix(geo)
    m0 = 117
    ds = np.arange(-116, 117)
    got = correlation_coefficient(ds, geo)
    ref = np.array([_direct_corr(A, m0, d) if d >= 0 else np.conj(_direct_corr(A, m0 + d, -d))
                    for d in ds])
    assert np.max(np.abs(got - ref)) < 1e-10


def test_correlation_requires_uniform():
    geo = TomoGeometry(0.03, 1e6, [0.0, 10.0, 40.0], 10.0, 5)
    with pytest.raises(ValueError):
        correlation_coefficient(1, geo)
