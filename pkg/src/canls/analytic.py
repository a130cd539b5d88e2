"""
Closed-form performance predictions for two closely spaced scatterers.

When two equal-amplitude scatterers ``alpha * rho_s`` apart are fitted with a
single scatterer, the best single fit sits at their midpoint and leaves a
deterministic residual ``r``. The cost gap between the one- and two-target
fits is then Gaussian with mean ``lambda_r = ||r||^2 / sigma^2`` and variance
``2 lambda_r``, and detection succeeds when the gap exceeds the extra penalty
``3 eta``. The noncentrality factorises as ``lambda_r = N * SNR * vartheta``.

All correlation terms are evaluated with ``L' = pi / (N - 1)``, i.e. in units
of the Rayleigh resolution, assuming equispaced baselines.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .signal_model import TomoGeometry, dirichlet

__all__ = [
    "ALPHA_VALID",
    "TwoTargetScenario",
    "q_function",
    "phase_slope",
    "pair_correlation",
    "single_target_fit",
    "vartheta",
    "analytic_pd",
    "analytic_pd_phase_averaged",
    "proposition1_statistic",
    "crlb_single",
    "normalized_crlb",
    "crlb_double",
    "db_to_linear",
]

#: Range of normalized separations over which the closed form is meaningful.
ALPHA_VALID = (0.0, 1.34)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def phase_slope(geometry: TomoGeometry) -> float:
    """Phase of the pair correlation per unit ``alpha`` for this baseline set.

    Zero for baselines centred on the master track; ``pi`` when they run from
    0 to ``db``. The correlation between steering vectors ``alpha * rho_s``
    apart is ``exp(j * slope * alpha) * dirichlet(L' alpha, N)``.
    """
    return 2.0 * np.pi * float(np.mean(geometry.baselines)) / geometry.baseline_extent


def _check_alpha(alpha):
    a = np.asarray(alpha)
    lo, hi = ALPHA_VALID
    if np.any((a <= lo) | (a >= hi)):
        warnings.warn(f"alpha outside the closely-spaced range {ALPHA_VALID}", RuntimeWarning,
                      stacklevel=3)


def pair_correlation(x, n: int, slope: float = 0.0):
    """Normalized correlation of steering vectors ``x`` Rayleigh cells apart."""
    lp = np.pi / (n - 1)
    return np.exp(1j * slope * np.asarray(x, dtype=float)) * dirichlet(lp * np.asarray(x), n)


def single_target_fit(alpha, dphi, n: int, slope: float = 0.0):
    """Best single-scatterer fit to an equal-amplitude pair.

    Returns ``(offset, gamma_p)``: the fitted location measured from the first
    scatterer in units of ``rho_s`` (the midpoint ``alpha / 2``) and its
    least-squares reflectivity scaled by the common amplitude.
    """
    _check_alpha(alpha)
    alpha = np.asarray(alpha, dtype=float)
    gamma_p = pair_correlation(-alpha / 2, n, slope) \
        + np.exp(1j * np.asarray(dphi)) * pair_correlation(alpha / 2, n, slope)
    return alpha / 2, gamma_p


def vartheta(alpha, dphi, n: int, slope: float = 0.0):
    """Normalized noncentrality ``lambda_r / (N * SNR)`` of the one-target misfit.

    ``2 + 2 cos(phi) D(L' alpha) - 4 cos^2(phi / 2) D(L' alpha / 2)^2`` with
    ``phi = dphi + slope * alpha`` and ``D`` the normalized digital sinc.
    ``slope = -pi / (N - 1)`` reproduces the expansion written in terms of
    ``cos(dphi) cos(L' alpha)`` and ``sin(dphi) sin(N L' alpha) / N``.
    """
    _check_alpha(alpha)
    alpha = np.asarray(alpha, dtype=float)
    lp = np.pi / (n - 1)
    phi = np.asarray(dphi, dtype=float) + slope * alpha
    d_full = dirichlet(lp * alpha, n)
    d_half = dirichlet(lp * alpha / 2, n)
    out = 2.0 + 2.0 * np.cos(phi) * d_full - 4.0 * np.cos(phi / 2) ** 2 * d_half ** 2
    return np.maximum(out, 0.0)


def _pd(lam, eta):
    lam = np.asarray(lam, dtype=float)
    safe = np.where(lam > 0, lam, 1.0)
    val = q_function(3.0 * eta / np.sqrt(2.0 * safe) - np.sqrt(safe / 2.0))
    return np.where(lam > 0, val, 0.0)


def analytic_pd(lambda_r, eta: float):
    """Probability that the two-target cost beats the one-target cost.

    ``Q(3 eta / sqrt(2 lambda_r) - sqrt(lambda_r / 2))``
    """
    if np.any(np.asarray(lambda_r) <= 0):
        raise ValueError("lambda_r must be positive")
    out = _pd(lambda_r, eta)
    return out[()] if out.ndim == 0 else out


def analytic_pd_phase_averaged(n: int, snr: float, alpha: float, eta: float,
                               n_phase: int = 181, slope: float = 0.0) -> float:
    """Analytic detection probability averaged over a uniform phase difference."""
    if n_phase < 8:
        raise ValueError("n_phase must be >= 8")
    # periodic trapezoid: drop the duplicated endpoint
    dphi = np.linspace(-np.pi, np.pi, n_phase)[:-1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lam = n * snr * vartheta(alpha, dphi, n, slope)
    return float(np.mean(_pd(lam, eta)))


def proposition1_statistic(r, sigma_n: float, rng: np.random.Generator, n_samples: int = 100_000,
                           return_samples: bool = False):
    """Monte Carlo of the cost gap ``Z = (||n + r||^2 - ||n||^2) / sigma^2``.

    Returns ``(mean, var, lambda_r)`` (and the samples when requested), where
    ``lambda_r = ||r||^2 / sigma^2`` is the predicted mean and half the
    predicted variance.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    r = np.asarray(r, dtype=complex)
    s2 = sigma_n ** 2
    lam = float(np.vdot(r, r).real / s2)
    z = np.empty(n_samples)
    step = 20_000
    for lo in range(0, n_samples, step):
        b = min(step, n_samples - lo)
        noise = sigma_n / np.sqrt(2.0) * (rng.standard_normal((b, r.size))
                                          + 1j * rng.standard_normal((b, r.size)))
        z[lo:lo + b] = (np.sum(np.abs(noise + r) ** 2, axis=1)
                        - np.sum(np.abs(noise) ** 2, axis=1)) / s2
    out = (float(z.mean()), float(z.var(ddof=1)), lam)
    return out + (z,) if return_samples else out


def crlb_single(n: int, snr: float, rho_s: float) -> float:
    """Elevation CRLB (m^2) for one scatterer: ``3 / (2 pi^2) * rho_s^2 / (N SNR)``."""
    return 3.0 / (2.0 * np.pi ** 2) * rho_s ** 2 / (n * snr)


def normalized_crlb(alpha) -> float:
    """Phase-averaged two-target CRLB inflation ``max(15 / (pi^2 alpha^2), 1)``."""
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError("alpha must be positive")
    return np.maximum(15.0 / (np.pi ** 2 * np.asarray(alpha, dtype=float) ** 2), 1.0)


def crlb_double(n: int, snr: float, rho_s: float, alpha: float) -> float:
    return crlb_single(n, snr, rho_s) * normalized_crlb(alpha)


@dataclass(frozen=True)
class TwoTargetScenario:
    """Equal-amplitude pair: ``N`` passes, linear SNR, separation ``alpha``, phase gap ``dphi``."""

    n: int
    snr: float
    alpha: float
    dphi: float = 0.0
    eta: float = 1.0
    slope: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("N must be >= 2")
        if not self.snr > 0:
            raise ValueError("snr must be positive")

    @property
    def lambda_r(self) -> float:
        return float(self.n * self.snr * vartheta(self.alpha, self.dphi, self.n, self.slope))

    @property
    def pd(self) -> float:
        return float(_pd(self.lambda_r, self.eta))
