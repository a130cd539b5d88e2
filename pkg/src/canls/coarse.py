"""
Coarse detection by successive cancellation.

Peaks of the beamforming correlation are picked one at a time, each followed
by projecting the measurement onto the orthogonal complement of all peaks
found so far. A CFAR test on the sequence of statistics, scanned from the
largest order down, fixes how many peaks are kept; the ``+-rho_s`` windows
around the kept peaks form the reduced search support for the fine step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from ._linalg import ls_fit
from .signal_model import SteeringMatrix, TomoGeometry, build_steering_matrix, make_rng

__all__ = [
    "CoarseResult",
    "test_statistic",
    "coarse_detect",
    "support_window",
    "max_statistic_batch",
    "calibrate_threshold",
    "false_alarm_rate",
]

EPS_FLOOR = 1e-24


@dataclass
class CoarseResult:
    """Output of :func:`coarse_detect`.

    ``peaks`` and ``statistics`` always have ``k_max`` entries (iteration order);
    ``n_detected`` of them survive the decision loop and define ``support``.
    """

    n_detected: int
    peaks: tuple
    statistics: np.ndarray
    support: np.ndarray
    partial_supports: list
    residual_energies: np.ndarray = field(repr=False)

    @property
    def detected_peaks(self) -> tuple:
        return self.peaks[: self.n_detected]

    @property
    def kept_supports(self) -> list:
        return self.partial_supports[: self.n_detected]

    def supports_disjoint(self) -> bool:
        """True if the kept partial supports are pairwise disjoint."""
        wins = sorted(self.kept_supports)
        return all(wins[i][1] < wins[i + 1][0] for i in range(len(wins) - 1))


def test_statistic(g, a) -> float:
    """Normalized peak power ``|a^H g|^2 / (N ||g_perp||^2)``.

    ``g_perp`` is the component of ``g`` orthogonal to ``a``. Returns ``inf``
    when that residual vanishes relative to ``||g||^2``.
    """
    g = np.asarray(g)
    a = np.asarray(a)
    energy = np.vdot(g, g).real
    if energy == 0:
        raise ValueError("empty measurement")
    c = np.vdot(a, g)
    g_perp = g - a * (c / np.vdot(a, a).real)
    resid = np.vdot(g_perp, g_perp).real
    if resid < EPS_FLOOR * energy:
        return np.inf
    return abs(c) ** 2 / (g.size * resid)


def support_window(peak: int, rho_s: float, geometry: TomoGeometry) -> tuple:
    """Closed index range covering ``[s_peak - rho_s, s_peak + rho_s]``, rounded outward and clipped."""
    half = rho_s / geometry.grid_spacing
    lo = math.floor(peak - half + 1e-9)
    hi = math.ceil(peak + half - 1e-9)
    return max(lo, 0), min(hi, geometry.grid_size - 1)


def coarse_detect(g, A: SteeringMatrix, rho_s: float, k_max: int, T: float) -> CoarseResult:
    """Successive-cancellation CFAR detection.

    Parameters
    ----------
    g : ndarray or Measurement
        Pixel observation (length ``N``).
    A : SteeringMatrix
    rho_s : float
        Half-width of each partial support (m).
    k_max : int
        Number of cancellation iterations.
    T : float
        CFAR threshold on the statistics.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if not T > 0:
        raise ValueError("threshold T must be positive")
    g = np.asarray(getattr(g, "g", g))
    geom = A.geometry
    n = A.n_passes
    energy = np.vdot(g, g).real

    excluded = np.zeros(A.grid_size, dtype=bool)
    peaks = []
    stats = np.zeros(k_max)
    res_energy = np.zeros(k_max + 1)
    res_energy[0] = energy
    windows = []
    r = g.astype(complex)
    for k in range(k_max):
        corr = np.abs(A.adjoint @ r)
        corr[excluded] = -1.0
        p = int(np.argmax(corr))  # first maximum: lowest index wins ties
        excluded[p] = True
        peaks.append(p)
        _, r_new, _ = ls_fit(g, A.columns(peaks))
        e_new = np.vdot(r_new, r_new).real
        res_energy[k + 1] = e_new
        num = corr[p] ** 2
        if energy == 0:
            stats[k] = 0.0
        elif e_new < EPS_FLOOR * energy:
            stats[k] = np.inf
        else:
            stats[k] = num / (n * e_new)
        windows.append(support_window(p, rho_s, geom))
        r = r_new

    k_hat = 0
    for k in range(k_max, 0, -1):
        if stats[k - 1] > T:
            k_hat = k
            break

    if k_hat:
        mask = np.zeros(A.grid_size, dtype=bool)
        for lo, hi in windows[:k_hat]:
            mask[lo:hi + 1] = True
        support = np.flatnonzero(mask)
    else:
        support = np.zeros(0, dtype=int)
    return CoarseResult(k_hat, tuple(peaks), stats, support, windows, res_energy)


def max_statistic_batch(A: SteeringMatrix, G: np.ndarray) -> np.ndarray:
    """Grid maximum of :func:`test_statistic` for each column of ``G`` (``N x B``)."""
    C = A.adjoint @ G
    p = np.abs(C) ** 2 / np.sum(np.abs(A.entries) ** 2, axis=0)[:, None]
    energy = np.sum(np.abs(G) ** 2, axis=0)
    resid = np.maximum(energy[None, :] - p, EPS_FLOOR * energy[None, :])
    return np.max(p / resid, axis=0)


def calibrate_threshold(geometry: TomoGeometry, p_fa: float, trials: int, rng=None,
                        batch: int = 4096) -> float:
    """Monte Carlo CFAR threshold: the ``1 - p_fa`` quantile of the noise-only grid maximum."""
    if not 0 < p_fa < 1:
        raise ValueError("p_fa must lie in (0, 1)")
    if trials < 10 / p_fa:
        raise ValueError(f"insufficient trials for quantile: need >= {int(np.ceil(10 / p_fa))}")
    if rng is None:
        rng = make_rng(0)
    A = build_steering_matrix(geometry)
    n = geometry.n_passes
    out = np.empty(trials)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        G = (rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))) / np.sqrt(2.0)
        out[done:done + b] = max_statistic_batch(A, G)
        done += b
    return float(np.quantile(out, 1.0 - p_fa))


def false_alarm_rate(geometry: TomoGeometry, T: float, trials: int, rng=None, k_max: int = 1,
                     batch: int = 4096) -> float:
    """Fraction of noise-only pixels on which the coarse detector declares a target.

    ``k_max = 1`` is the single CFAR test the threshold is calibrated for
    (vectorized); larger ``k_max`` runs the full successive-cancellation
    decision, where any of the ``k_max`` statistics may trigger.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if rng is None:
        rng = make_rng(1)
    A = build_steering_matrix(geometry)
    n = geometry.n_passes
    hits = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        G = (rng.standard_normal((n, b)) + 1j * rng.standard_normal((n, b))) / np.sqrt(2.0)
        if k_max == 1:
            hits += int(np.count_nonzero(max_statistic_batch(A, G) > T))
        else:
            rho = geometry.rayleigh_resolution
            hits += sum(coarse_detect(G[:, i], A, rho, k_max, T).n_detected > 0 for i in range(b))
        done += b
    return hits / trials
