from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

import canls.fine as fine
from canls._linalg import ls_fit
from canls.baselines import exhaustive_nls_detect
from canls.coarse import coarse_detect
from canls.fine import (
    ModelSelectionConfig,
    detect_pixel,
    detect_pixel_multi,
    estimate_reflectivity,
    model_order_select,
    nls_search,
    penalty,
    penalty_factor,
)
from canls.signal_model import build_steering_matrix, make_rng, reference_geometry, steering_vectors

from conftest import cnoise
from oracles import brute_force_order, residual_energy


@pytest.fixture(scope="module")
def small():
    # M = 20 grid over 5 rho_s: dense enough for correlated columns
    return build_steering_matrix(reference_geometry(elevation_extent=130.0, grid_size=20))


def test_penalty_values():
    assert penalty(1, 20, "AIC") == 3.0
    assert penalty(2, 20, "BIC") == pytest.approx(3 * np.log(20), abs=1e-12)
    assert penalty(2, 20, "BIC") == pytest.approx(8.987, abs=1e-3)
    assert penalty(2, 20, "AICc") == pytest.approx(20 / 13 * 6, abs=1e-12)
    assert penalty(2, 20, "AICc") == pytest.approx(9.231, abs=1e-3)
    assert penalty(0, 20, "AICc") == 0.0


def test_penalty_errors():
    with pytest.raises(ValueError):
        penalty_factor("HQ", 20, 1)
    with pytest.raises(ValueError):
        penalty_factor("AICc", 6, 2)
    with pytest.raises(ValueError):
        ModelSelectionConfig("AICc", k_max=7).check(20)
    with pytest.raises(ValueError):
        ModelSelectionConfig(noise_var=0.0)
    with pytest.raises(ValueError):
        ModelSelectionConfig(k_max=0)


def test_estimate_scaled_column(A):
    assert np.allclose(estimate_reflectivity(2 * A.entries[:, 33], A.columns([33])), [2.0])


def test_estimate_orthogonal_columns(A, rng):
    # 3.8 rho_s is an exact null of the kernel on uniform baselines
    cols = steering_vectors(A.geometry, [50.0, 50.0 + 3.8 * 26.0])
    assert abs(np.vdot(cols[:, 0], cols[:, 1])) < 1e-10
    g = cnoise(rng, 20)
    assert np.allclose(estimate_reflectivity(g, cols), cols.conj().T @ g / 20, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_estimate_normal_equations(seed, k):
    rng = make_rng(seed)
    A = build_steering_matrix(reference_geometry())
    idx = rng.choice(234, k, replace=False)
    cols = A.columns(idx)
    g = cnoise(rng, 20)
    ref = np.linalg.solve(cols.conj().T @ cols, cols.conj().T @ g)
    got = estimate_reflectivity(g, cols)
    assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


def test_ls_fit_coincident_columns_loaded(A):
    # loading keeps duplicated unit-modulus columns solvable: split the amplitude evenly
    coef, resid, cond = ls_fit(3 * A.entries[:, 5], A.columns([5, 5]))
    assert 1e4 < cond <= 1e12
    assert np.allclose(coef, [1.5, 1.5], atol=1e-6)
    assert np.linalg.norm(resid) < 1e-6


def test_estimate_degenerate_support(A):
    a = A.entries[:, 5]
    with pytest.raises(ValueError, match="degenerate"):
        estimate_reflectivity(a, np.column_stack([a, 1e3 * a]))


def test_nls_support_too_small(A):
    with pytest.raises(ValueError, match="support too small"):
        nls_search(np.ones(20), A, [1, 2], 3)


def test_nls_single_noiseless(A):
    idx, eps = nls_search(1.7j * A.entries[:, 77], A, np.arange(234), 1)
    assert idx == (77,) and eps == pytest.approx(0.0, abs=1e-10)


def test_nls_k0(A, rng):
    g = cnoise(rng, 20)
    assert nls_search(g, A, np.arange(234), 0) == ((), pytest.approx(np.vdot(g, g).real))


def test_nls_brute_force_m20(small):
    rng = make_rng(99)
    mism = 0
    for _ in range(100):
        s = rng.uniform(0, 130, 2)
        g = steering_vectors(small.geometry, s) @ (2 * np.exp(2j * np.pi * rng.random(2))) \
            + cnoise(rng, 20)
        got, eps = nls_search(g, small, np.arange(20), 2)
        best = min(combinations(range(20), 2),
                   key=lambda c: residual_energy(g, small.entries[:, list(c)]))
        mism += got != best
        assert eps == pytest.approx(residual_energy(g, small.entries[:, list(best)]), rel=1e-9)
    assert mism == 0


@given(st.integers(0, 2**32 - 1))
def test_eps_non_increasing(small, seed):
    rng = make_rng(seed)
    g = cnoise(rng, 20) + 3 * small.entries[:, rng.integers(20)]
    eps = [nls_search(g, small, np.arange(20), k)[1] for k in range(4)]
    assert all(b <= a + 1e-9 * eps[0] for a, b in zip(eps, eps[1:]))


def test_model_order_zero_measurement(A):
    det = model_order_select(np.zeros(20, dtype=complex), A, np.arange(50),
                             ModelSelectionConfig(noise_var=1.0))
    assert det.n_targets == 0


def test_model_order_noiseless_single(A):
    cfg = ModelSelectionConfig("BIC", noise_var=0.1, k_max=2)
    det = model_order_select(4 * A.entries[:, 120], A, np.arange(100, 140), cfg)
    assert det.n_targets == 1 and det.indices == (120,)
    eta = penalty_factor("BIC", 20, 1)
    assert det.cost_trace[1] == pytest.approx(3 * eta, abs=1e-8)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["AIC", "BIC", "AICc"]), st.booleans(),
       st.booleans())
def test_cost_trace_recomputes(small, seed, rule, known, early):
    rng = make_rng(seed)
    g = cnoise(rng, 20) + 2 * small.entries[:, rng.integers(20)]
    cfg = ModelSelectionConfig(rule, 1.0 if known else None, 3, early)
    det = model_order_select(g, small, np.arange(20), cfg)
    energy = np.vdot(g, g).real
    for k, (e, J) in enumerate(zip(det.eps_trace, det.cost_trace)):
        assert J == pytest.approx(cfg.cost(e, 20, energy) + penalty(k, 20, rule), abs=1e-10)
    assert len(det.indices) == det.n_targets == det.reflectivities.size
    assert len(set(det.indices)) == det.n_targets


def test_detect_pixel_noise_only_skips_fine_search(A, monkeypatch):
    calls = []
    real = fine._best_subset
    monkeypatch.setattr(fine, "_best_subset", lambda *a: calls.append(1) or real(*a))
    g = 1e-3 * cnoise(make_rng(0), 20)
    det = detect_pixel(g, A, 26.0, 1e6, ModelSelectionConfig(noise_var=1.0))
    assert det.n_targets == 0 and det.n_subsets == 0 and not calls


def test_detect_pixel_fast_path_separated(A, geo):
    rho = geo.rayleigh_resolution
    i1, i2 = 60, 60 + int(round(4 * rho / geo.grid_spacing))
    g = A.entries[:, i1] + 1j * A.entries[:, i2]
    cfg = ModelSelectionConfig(noise_var=0.01)
    fast = detect_pixel(g, A, rho, 0.8, cfg)
    full = detect_pixel(g, A, rho, 0.8, cfg, fast_path=False)
    assert fast.fast_path
    assert fast.indices == full.indices == (i1, i2)
    assert set(fast.indices) == set(fast.coarse.detected_peaks)


def test_detect_pixel_multi_matches_single(A):
    rng = make_rng(4)
    cfgs = [ModelSelectionConfig(r, nv, 2) for r in ("AIC", "BIC", "AICc") for nv in (None,)]
    for _ in range(30):
        s = rng.uniform(30, 300)
        g = steering_vectors(A.geometry, [s, s + 13]) @ np.array([3, 3 * np.exp(1j * rng.uniform(-3, 3))]) \
            + cnoise(rng, 20)
        multi = detect_pixel_multi(g, A, 26.0, 0.8, cfgs)
        for c, m in zip(cfgs, multi):
            one = detect_pixel(g, A, 26.0, 0.8, c)
            assert (one.n_targets, one.indices) == (m.n_targets, m.indices)


def test_detect_pixel_refine_candidates_on_subgrid(A, rng):
    s = 64.75 * A.geometry.grid_spacing  # on the 4x refined grid, off the coarse one
    g = steering_vectors(A.geometry, [s]) @ [5.0] + 0.1 * cnoise(rng, 20)
    det = detect_pixel(g, A, 26.0, 0.8, ModelSelectionConfig(noise_var=0.01, k_max=2),
                       fast_path=False, refine=4)
    assert det.n_targets == 1
    assert det.indices == (64.75,)
    assert det.elevations[0] == pytest.approx(s)


@given(st.integers(0, 2**32 - 1))
def test_full_grid_equals_exhaustive(small, seed):
    rng = make_rng(seed)
    k = rng.integers(0, 3)
    g = steering_vectors(small.geometry, rng.uniform(0, 130, k)) @ (2.5 * np.exp(2j * np.pi * rng.random(k))) \
        + cnoise(rng, 20)
    cfg = ModelSelectionConfig("BIC", None, 2, early_stop=False)
    a = model_order_select(g, small, np.arange(20), cfg)
    b = exhaustive_nls_detect(g, small, cfg)
    assert (a.n_targets, a.indices) == (b.n_targets, b.indices)
    kb, sup, _, _ = brute_force_order(g, small.entries, 2, "BIC", None, early_stop=False)
    assert (a.n_targets, a.indices) == (kb, sup)


@given(st.integers(0, 2**32 - 1), st.floats(2.2, 6.0))
def test_disjoint_supports_fast_path_is_exact(A, seed, alpha):
    rng = make_rng(seed)
    geo = A.geometry
    rho = geo.rayleigh_resolution
    s1 = rng.uniform(rho, 360 - rho - alpha * rho)
    g = steering_vectors(geo, [s1, s1 + alpha * rho]) @ (3 * np.exp(2j * np.pi * rng.random(2))) \
        + cnoise(rng, 20)
    cfg = ModelSelectionConfig(noise_var=1.0)
    c = coarse_detect(g, A, rho, 2, 0.8)
    fast = detect_pixel(g, A, rho, 0.8, cfg)
    full = detect_pixel(g, A, rho, 0.8, cfg, fast_path=False)
    assert (fast.n_targets, fast.indices) == (full.n_targets, full.indices)
    if c.n_detected == 2 and c.supports_disjoint():
        assert fast.fast_path


def test_combos_lexicographic():
    for n, k in ((6, 1), (6, 2), (7, 3)):
        assert [tuple(r) for r in fine._combos(n, k)] == list(combinations(range(n), k))
